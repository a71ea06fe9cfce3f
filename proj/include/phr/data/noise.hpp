#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "phr/dsp/audio.hpp"

namespace phr::data {

struct NoiseSegment {
  dsp::AudioBuffer audio;
  std::string source_id;
  double start = 0.0;  // seconds in the source
  double end = 0.0;
  double rms = 0.0;
  bool needs_review = true;
};

struct ExtractOptions {
  double min_seconds = 2.0;
  double frame_seconds = 0.100;
  double hop_seconds = 0.050;
  double percentile = 5.0;
  // Frames within this many dB above the percentile level count as quiet.
  double margin_db = 6.0;
  // Quiet frames must also sit below this absolute level (dBFS RMS), so a
  // track that is loud throughout yields nothing.
  double ceiling_dbfs = -25.0;
};

// Energy-based stand-in for a learned noise/music classifier: runs of quiet
// frames at least `min_seconds` long. Every segment is flagged for review.
std::vector<NoiseSegment> extract_noise_segments(const dsp::AudioBuffer& audio,
                                                 const std::string& source_id,
                                                 const ExtractOptions& options = {});

struct ExtendedNoise {
  dsp::AudioBuffer audio;
  // First output sample of each crossfade region.
  std::vector<std::size_t> crossfades;
};

// Loops `segment` to exactly `target_samples`, overlapping consecutive
// repetitions by `crossfade_seconds` with cos/sin amplitude fades (power
// weights cos^2 + sin^2 = 1). A target no longer than the segment is a plain
// truncation. Throws std::invalid_argument for segments shorter than two
// crossfades.
ExtendedNoise extend_noise(const dsp::AudioBuffer& segment, std::size_t target_samples,
                           double crossfade_seconds = 0.5);

}  // namespace phr::data
