#pragma once

#include <cstdint>
#include <filesystem>

#include "phr/data/manifest.hpp"
#include "phr/dsp/audio.hpp"

namespace phr::data {

// Tonal stand-ins for the four subgenres: harmonic notes with
// genre-specific envelopes, voicing and vibrato. Normalized to `rms`.
dsp::AudioBuffer synth_music(Subgenre genre, double seconds, std::uint64_t seed,
                             double rms = 0.1);

// Broadband stationary hiss (white noise through a gentle high shelf).
dsp::AudioBuffer synth_hiss(double seconds, std::uint64_t seed, double rms = 0.01);

struct SurfaceNoiseOptions {
  double hiss_rms = 0.01;
  double rumble_rms = 0.005;
  double crackle_per_second = 6.0;
  double crackle_peak = 0.15;
  // One scratch per turntable revolution.
  double revolution_seconds = 0.77;
  double scratch_peak = 0.3;
};

// Hiss + rumble + random crackle + a click once per revolution, with the
// hiss level also modulated at the revolution rate.
dsp::AudioBuffer synth_surface_noise(double seconds, std::uint64_t seed,
                                     const SurfaceNoiseOptions& options = {});

struct CorpusOptions {
  std::size_t clean_per_genre = 4;
  std::size_t noise_files = 4;
  double clean_seconds = 8.0;
  double noise_seconds = 6.0;
  std::uint64_t seed = 1;
};

// Writes clean/<genre>_<i>.wav, noise/surface_<i>.wav (float32) and
// manifest.tsv under `dir`, and returns the manifest.
Manifest write_synthetic_corpus(const std::filesystem::path& dir, const CorpusOptions& options);

}  // namespace phr::data
