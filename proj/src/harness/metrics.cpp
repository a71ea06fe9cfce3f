#include "phr/harness/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phr::harness {

double snr_db(const dsp::AudioBuffer& reference, const dsp::AudioBuffer& estimate) {
  if (reference.size() != estimate.size()) throw std::invalid_argument("snr_db: length mismatch");
  double ps = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference.samples[i];
    const double d = r - estimate.samples[i];
    ps += r * r;
    pe += d * d;
  }
  if (!(ps > 0.0)) throw std::invalid_argument("snr_db: reference is silent");
  if (pe == 0.0) return kSnrCapDb;
  return std::min(10.0 * std::log10(ps / pe), kSnrCapDb);
}

double delta_snr(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& noisy,
                 const dsp::AudioBuffer& denoised) {
  return snr_db(clean, denoised) - snr_db(clean, noisy);
}

dsp::AudioBuffer residual_noise(const dsp::AudioBuffer& noisy, const dsp::AudioBuffer& denoised) {
  if (noisy.size() != denoised.size()) {
    throw std::invalid_argument("residual_noise: length mismatch");
  }
  dsp::AudioBuffer r = noisy;
  for (std::size_t i = 0; i < r.size(); ++i) r.samples[i] -= denoised.samples[i];
  return r;
}

double log_spectral_distance(const dsp::AudioBuffer& reference, const dsp::AudioBuffer& estimate,
                             const dsp::StftConfig& cfg) {
  if (reference.size() != estimate.size()) {
    throw std::invalid_argument("log_spectral_distance: length mismatch");
  }
  const dsp::Spectrogram a = dsp::stft_full(reference, cfg).spec;
  const dsp::Spectrogram b = dsp::stft_full(estimate, cfg).spec;
  // Full-scale sine peak power for this window, pushed down 100 dB.
  double wsum = 0.0;
  for (double w : dsp::analysis_window(cfg)) wsum += w;
  const double floor = 0.25 * wsum * wsum * 1e-10;
  double total = 0.0;
  for (std::size_t t = 0; t < a.frames; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.bins; ++k) {
      const double d = 10.0 * std::log10(std::max(a.power(k, t), floor) / std::max(b.power(k, t), floor));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(a.bins));
  }
  return a.frames == 0 ? 0.0 : total / static_cast<double>(a.frames);
}

}  // namespace phr::harness
