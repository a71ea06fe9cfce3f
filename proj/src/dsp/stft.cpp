#include "phr/dsp/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace phr::dsp {
namespace {

// FFTW planning is not thread-safe, execution with the new-array interface
// is. Plans are created once per size and kept for the process lifetime.
struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, FftPlans> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  const int size = static_cast<int>(n);
  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  FftPlans p;
  p.forward = fftw_plan_dft_r2c_1d(size, real, spec, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.inverse = fftw_plan_dft_c2r_1d(size, spec, real, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(real);
  fftw_free(spec);
  return cache.emplace(n, p).first->second;
}

struct FftBuffers {
  explicit FftBuffers(std::size_t n)
      : real(fftw_alloc_real(n)), spec(fftw_alloc_complex(n / 2 + 1)) {}
  ~FftBuffers() {
    fftw_free(real);
    fftw_free(spec);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;

  double* real;
  fftw_complex* spec;
};

}  // namespace

// Mirror without repeating the edge sample.
std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  const std::size_t m = i % period;
  return m < n ? m : period - m;
}

std::size_t StftConfig::frames_for(std::size_t length) const {
  if (length < window_size) return 0;
  return 1 + (length - window_size) / hop;
}

std::size_t StftConfig::length_for(std::size_t frames) const {
  return frames == 0 ? 0 : window_size + (frames - 1) * hop;
}

void StftConfig::validate() const {
  if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  if (window_size % hop != 0) throw std::invalid_argument("stft: hop must divide window_size");
  if (window_size < 2 * hop) throw std::invalid_argument("stft: window_size must be >= 2 * hop");
}

Spectrogram::Spectrogram(const StftConfig& cfg, std::size_t n_frames)
    : config(cfg),
      bins(cfg.bins()),
      frames(n_frames),
      real(bins * n_frames, 0.0),
      imag(bins * n_frames, 0.0) {}

bool Spectrogram::all_finite() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(real.begin(), real.end(), finite) &&
         std::all_of(imag.begin(), imag.end(), finite);
}

std::vector<double> hamming_window(std::size_t size) {
  if (size < 2) throw std::invalid_argument("hamming_window: size must be >= 2");
  std::vector<double> w(size);
  for (std::size_t n = 0; n < size; ++n) {
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(size));
  }
  return w;
}

std::vector<double> analysis_window(const StftConfig& cfg) {
  switch (cfg.window_kind) {
    case WindowKind::Hamming:
      return hamming_window(cfg.window_size);
  }
  throw std::invalid_argument("unknown window kind");
}

Spectrogram stft(const AudioBuffer& audio, const StftConfig& cfg) {
  cfg.validate();
  if (audio.size() < cfg.window_size) {
    throw std::invalid_argument("stft: input shorter than one window (" +
                                std::to_string(audio.size()) + " < " +
                                std::to_string(cfg.window_size) + ")");
  }
  const std::size_t n = cfg.window_size;
  const std::size_t frames = cfg.frames_for(audio.size());
  Spectrogram spec(cfg, frames);
  const auto window = analysis_window(cfg);
  const FftPlans& plan = plans_for(n);
  const double* x = audio.samples.data();
  const std::size_t bins = spec.bins;

#pragma omp parallel
  {
    FftBuffers buf(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(frames); ++t) {
      const double* frame = x + static_cast<std::size_t>(t) * cfg.hop;
      for (std::size_t i = 0; i < n; ++i) buf.real[i] = frame[i] * window[i];
      fftw_execute_dft_r2c(plan.forward, buf.real, buf.spec);
      for (std::size_t k = 0; k < bins; ++k) {
        spec.real[k * frames + static_cast<std::size_t>(t)] = buf.spec[k][0];
        spec.imag[k * frames + static_cast<std::size_t>(t)] = buf.spec[k][1];
      }
    }
  }
  return spec;
}

AudioBuffer istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.config;
  cfg.validate();
  if (spec.bins != cfg.bins() || spec.real.size() != spec.bins * spec.frames ||
      spec.imag.size() != spec.real.size()) {
    throw std::invalid_argument("istft: spectrogram inconsistent with its config");
  }
  const std::size_t n = cfg.window_size;
  const std::size_t frames = spec.frames;
  if (frames == 0) return {};
  const auto window = analysis_window(cfg);
  const FftPlans& plan = plans_for(n);
  const double scale = 1.0 / static_cast<double>(n);

  std::vector<double> segments(frames * n);
#pragma omp parallel
  {
    FftBuffers buf(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(frames); ++t) {
      for (std::size_t k = 0; k < spec.bins; ++k) {
        buf.spec[k][0] = spec.real[k * frames + static_cast<std::size_t>(t)];
        buf.spec[k][1] = spec.imag[k * frames + static_cast<std::size_t>(t)];
      }
      fftw_execute_dft_c2r(plan.inverse, buf.spec, buf.real);
      double* seg = segments.data() + static_cast<std::size_t>(t) * n;
      for (std::size_t i = 0; i < n; ++i) seg[i] = buf.real[i] * scale * window[i];
    }
  }

  const std::size_t length = cfg.length_for(frames);
  std::vector<double> out(length, 0.0);
  std::vector<double> norm(length, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* seg = segments.data() + t * n;
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) {
      out[start + i] += seg[i];
      norm[start + i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < length; ++i) out[i] /= norm[i];
  return AudioBuffer(std::move(out));
}

PaddedAnalysis stft_full(const AudioBuffer& audio, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t offset = cfg.window_size - cfg.hop;
  const std::size_t last = offset + std::max<std::size_t>(audio.size(), 1) - 1;
  const std::size_t padded_len = (last / cfg.hop) * cfg.hop + cfg.window_size;
  std::vector<double> padded(padded_len, 0.0);
  std::copy(audio.samples.begin(), audio.samples.end(),
            padded.begin() + static_cast<std::ptrdiff_t>(offset));
  return {stft(AudioBuffer(std::move(padded)), cfg), offset, audio.size()};
}

AudioBuffer istft_full(const Spectrogram& spec, std::size_t offset, std::size_t length) {
  AudioBuffer full = istft(spec);
  if (offset + length > full.size()) {
    throw std::invalid_argument("istft_full: spectrogram too short for requested length");
  }
  return full.slice(offset, length);
}

std::vector<double> freq_pos_embeddings(std::size_t bins, std::size_t channels) {
  if (channels % 2 != 0) throw std::invalid_argument("freq_pos_embeddings: channels must be even");
  if (bins < 2) throw std::invalid_argument("freq_pos_embeddings: need at least 2 bins");
  std::vector<double> grid(channels * bins);
  for (std::size_t pair = 0; pair < channels / 2; ++pair) {
    const double freq = std::ldexp(std::numbers::pi, static_cast<int>(pair));
    for (std::size_t b = 0; b < bins; ++b) {
      const double nu = static_cast<double>(b) / static_cast<double>(bins - 1);
      grid[(2 * pair) * bins + b] = std::sin(freq * nu);
      grid[(2 * pair + 1) * bins + b] = std::cos(freq * nu);
    }
  }
  return grid;
}

std::size_t round_up(std::size_t value, std::size_t multiple) {
  if (multiple == 0) throw std::invalid_argument("round_up: multiple must be >= 1");
  return (value + multiple - 1) / multiple * multiple;
}

PaddedSpectrogram pad_to_grid(const Spectrogram& spec, std::size_t multiple) {
  if (multiple < 1) throw std::invalid_argument("pad_to_grid: multiple must be >= 1");
  PaddedSpectrogram out;
  out.config = spec.config;
  out.original = {spec.bins, spec.frames};
  out.rows = round_up(spec.bins, multiple);
  out.cols = round_up(spec.frames, multiple);
  out.real.resize(out.rows * out.cols);
  out.imag.resize(out.rows * out.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    const std::size_t sr = reflect_index(r, spec.bins);
    for (std::size_t c = 0; c < out.cols; ++c) {
      const std::size_t sc = reflect_index(c, spec.frames);
      out.real[r * out.cols + c] = spec.real[sr * spec.frames + sc];
      out.imag[r * out.cols + c] = spec.imag[sr * spec.frames + sc];
    }
  }
  return out;
}

Spectrogram crop_from_grid(const PaddedSpectrogram& padded) {
  Spectrogram spec(padded.config, padded.original.frames);
  spec.bins = padded.original.bins;
  spec.real.assign(spec.bins * spec.frames, 0.0);
  spec.imag.assign(spec.bins * spec.frames, 0.0);
  for (std::size_t r = 0; r < spec.bins; ++r) {
    for (std::size_t c = 0; c < spec.frames; ++c) {
      spec.real[r * spec.frames + c] = padded.real[r * padded.cols + c];
      spec.imag[r * spec.frames + c] = padded.imag[r * padded.cols + c];
    }
  }
  return spec;
}

}  // namespace phr::dsp
