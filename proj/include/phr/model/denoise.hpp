#pragma once

#include <filesystem>

#include "phr/dsp/audio.hpp"
#include "phr/dsp/stft.hpp"
#include "phr/model/network.hpp"

namespace phr::model {

// Network outputs for one noisy spectrogram, cropped back to its own grid.
struct SpectralEstimate {
  dsp::Spectrogram y1;
  dsp::Spectrogram y2;
};

SpectralEstimate denoise_spectrogram(const dsp::Spectrogram& noisy, const TwoStageModel& model);

struct DenoiseOptions {
  double segment_seconds = 5.0;
  double overlap_seconds = 0.25;
  dsp::StftConfig stft;
};

// Runs the model over consecutive segments and joins them with
// sin^2 / cos^2 crossfades over the overlaps. Output length equals input
// length. Stage-2 output is used.
dsp::AudioBuffer denoise_file(const dsp::AudioBuffer& audio, const TwoStageModel& model,
                              const DenoiseOptions& options = {});
// Throws FormatError if the checkpoint cannot be read.
dsp::AudioBuffer denoise_file(const dsp::AudioBuffer& audio,
                              const std::filesystem::path& checkpoint,
                              const DenoiseOptions& options = {});

}  // namespace phr::model
