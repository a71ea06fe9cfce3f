#include "phr/baseline/lsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace phr::baseline {
namespace {

// Below this the PSD counts as "no noise"; keeps gamma finite.
constexpr double kPsdFloor = 1e-20;
constexpr double kGammaFloor = 1e-12;

NoisePsd mean_power(const dsp::Spectrogram& spec, const std::vector<std::size_t>& frames) {
  NoisePsd psd;
  psd.config = spec.config;
  psd.power.assign(spec.bins, 0.0);
  psd.frames_used = frames.size();
  for (std::size_t k = 0; k < spec.bins; ++k) {
    double s = 0.0;
    for (std::size_t t : frames) s += spec.power(k, t);
    psd.power[k] = s / static_cast<double>(frames.size());
  }
  return psd;
}

double gain_unchecked(double xi, double gamma, double floor) {
  const double v = xi * gamma / (1.0 + xi);
  const double g = xi / (1.0 + xi) * std::exp(0.5 * expint_e1(v));
  return std::max(g, floor);
}

}  // namespace

NoisePsd estimate_noise_psd(const dsp::AudioBuffer& noise, const dsp::StftConfig& cfg) {
  cfg.validate();
  if (noise.size() < static_cast<std::size_t>(noise.sample_rate)) {
    throw std::invalid_argument("estimate_noise_psd: noise reference must be at least 1 s");
  }
  const dsp::Spectrogram spec = dsp::stft(noise, cfg);
  std::vector<std::size_t> frames(spec.frames);
  std::iota(frames.begin(), frames.end(), std::size_t{0});
  return mean_power(spec, frames);
}

NoisePsd estimate_noise_psd_quiet_frames(const dsp::AudioBuffer& audio, double fraction,
                                         const dsp::StftConfig& cfg) {
  cfg.validate();
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("estimate_noise_psd_quiet_frames: fraction must be in (0, 1]");
  }
  if (audio.size() < cfg.window_size) {
    throw std::invalid_argument("estimate_noise_psd_quiet_frames: input shorter than one window");
  }
  const dsp::Spectrogram spec = dsp::stft(audio, cfg);
  std::vector<double> energy(spec.frames, 0.0);
  for (std::size_t k = 0; k < spec.bins; ++k)
    for (std::size_t t = 0; t < spec.frames; ++t) energy[t] += spec.power(k, t);
  std::vector<std::size_t> order(spec.frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // stable_sort so ties resolve the same way everywhere
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return energy[a] < energy[b]; });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(spec.frames))));
  order.resize(keep);
  return mean_power(spec, order);
}

double expint_e1(double v) {
  if (!(v > 0.0)) throw std::invalid_argument("expint_e1: argument must be positive");
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (v < 1.0) {
    constexpr double euler = 0.57721566490153286061;
    double sum = 0.0, term = 1.0;
    for (int k = 1; k < 100; ++k) {
      term *= -v / k;
      const double add = -term / k;
      sum += add;
      if (std::abs(add) < std::abs(sum) * eps) break;
    }
    return -euler - std::log(v) + sum;
  }
  if (v > 740.0) return 0.0;
  // Modified Lentz on the even form of the continued fraction.
  constexpr double tiny = 1e-300;
  double b = v + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (an * d + b);
    c = b + an / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h * std::exp(-v);
}

double lsa_gain(double xi, double gamma, double floor_db) {
  if (!(xi > 0.0) || !(gamma > 0.0) || !std::isfinite(xi) || !std::isfinite(gamma)) {
    throw std::invalid_argument("lsa_gain: xi and gamma must be positive and finite");
  }
  return gain_unchecked(xi, gamma, std::pow(10.0, floor_db / 20.0));
}

dsp::AudioBuffer lsa_denoise(const dsp::AudioBuffer& noisy, const NoisePsd& psd,
                             const LsaOptions& options) {
  const dsp::StftConfig& cfg = psd.config;
  if (psd.power.size() != cfg.bins()) {
    throw std::invalid_argument("lsa_denoise: PSD bins do not match its STFT config");
  }
  if (noisy.empty()) return noisy;
  dsp::PaddedAnalysis a = dsp::stft_full(noisy, cfg);
  dsp::Spectrogram& s = a.spec;
  const double floor = std::pow(10.0, options.floor_db / 20.0);
  // The a-priori SNR gets the same floor, in power.
  const double xi_min = floor * floor;
  const double alpha = options.smoothing;

  std::vector<double> prev_amp2(s.bins, 0.0);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t k = 0; k < s.bins; ++k) {
      const double p = std::max(psd.power[k], kPsdFloor);
      const double x2 = s.power(k, t);
      const double gamma = std::max(x2 / p, kGammaFloor);
      const double ml = std::max(gamma - 1.0, 0.0);
      const double xi = std::max(t == 0 ? ml : alpha * prev_amp2[k] / p + (1.0 - alpha) * ml, xi_min);
      const double g = gain_unchecked(xi, gamma, floor);
      prev_amp2[k] = g * g * x2;
      const std::size_t i = s.index(k, t);
      s.real[i] *= g;
      s.imag[i] *= g;
    }
  }
  return dsp::istft_full(s, a.offset, a.length);
}

}  // namespace phr::baseline
