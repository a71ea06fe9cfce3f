#include "phr/model/denoise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "phr/model/checkpoint.hpp"
#include "phr/model/features.hpp"

namespace phr::model {

SpectralEstimate denoise_spectrogram(const dsp::Spectrogram& noisy, const TwoStageModel& model) {
  nn::NoGradGuard no_grad;
  dsp::PaddedSpectrogram grid = dsp::pad_to_grid(noisy, 16);
  const Tensor x = planes_to_tensor(grid);
  const Tensor emb = embedding_grid(noisy.bins, grid.rows, grid.cols,
                                    model.config().embedding_channels);
  const StageOutputs out = model.forward(x, emb);
  SpectralEstimate est;
  tensor_to_planes(out.y1, grid);
  est.y1 = dsp::crop_from_grid(grid);
  tensor_to_planes(out.y2, grid);
  est.y2 = dsp::crop_from_grid(grid);
  return est;
}

namespace {

dsp::AudioBuffer denoise_segment(const dsp::AudioBuffer& segment, const TwoStageModel& model,
                                 const dsp::StftConfig& cfg) {
  const dsp::PaddedAnalysis a = dsp::stft_full(segment, cfg);
  const SpectralEstimate est = denoise_spectrogram(a.spec, model);
  return dsp::istft_full(est.y2, a.offset, a.length);
}

}  // namespace

dsp::AudioBuffer denoise_file(const dsp::AudioBuffer& audio, const TwoStageModel& model,
                              const DenoiseOptions& options) {
  const dsp::StftConfig& cfg = options.stft;
  cfg.validate();
  if (audio.size() < cfg.window_size)
    throw std::invalid_argument("denoise_file: input shorter than one analysis window");
  const std::size_t seg = dsp::seconds_to_samples(options.segment_seconds);
  const std::size_t overlap = dsp::seconds_to_samples(options.overlap_seconds);
  if (seg <= overlap || seg < cfg.window_size)
    throw std::invalid_argument("denoise_file: segment must exceed overlap and one window");
  const std::size_t step = seg - overlap;

  dsp::AudioBuffer out = dsp::AudioBuffer::zeros(audio.size());
  std::size_t written = 0;  // samples [0, written) are final
  for (std::size_t start = 0; written < audio.size(); start += step) {
    const std::size_t len = std::min(seg, audio.size() - start);
    const dsp::AudioBuffer y = denoise_segment(audio.slice(start, len), model, cfg);
    // Overlap with the previous segment: [start, written).
    const std::size_t fade = written - start;
    for (std::size_t i = 0; i < len; ++i) {
      if (i < fade) {
        const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(fade);
        const double g = std::sin(0.5 * std::numbers::pi * t);
        out.samples[start + i] = out.samples[start + i] * (1.0 - g * g) + y.samples[i] * g * g;
      } else {
        out.samples[start + i] = y.samples[i];
      }
    }
    written = start + len;
  }
  return out;
}

dsp::AudioBuffer denoise_file(const dsp::AudioBuffer& audio,
                              const std::filesystem::path& checkpoint,
                              const DenoiseOptions& options) {
  const TwoStageModel model = load_model(checkpoint);
  return denoise_file(audio, model, options);
}

}  // namespace phr::model
