#pragma once

#include <cstddef>
#include <vector>

#include "phr/dsp/audio.hpp"
#include "phr/dsp/stft.hpp"

namespace phr::baseline {

inline constexpr double kDefaultFloorDb = -25.0;

struct NoisePsd {
  dsp::StftConfig config;
  std::vector<double> power;  // per bin, linear
  std::size_t frames_used = 0;
};

// Mean |X|^2 per bin over every frame of `noise`. Needs at least 1 s.
NoisePsd estimate_noise_psd(const dsp::AudioBuffer& noise, const dsp::StftConfig& cfg = {});

// PSD from the quietest `fraction` of frames of `audio` (by frame energy),
// for when no noise-only reference exists.
NoisePsd estimate_noise_psd_quiet_frames(const dsp::AudioBuffer& audio, double fraction = 0.1,
                                         const dsp::StftConfig& cfg = {});

// Exponential integral E1(v) for v > 0: power series below 1, continued
// fraction above.
double expint_e1(double v);

// Ephraim-Malah log-spectral amplitude gain, floored at `floor_db`.
double lsa_gain(double xi, double gamma, double floor_db = kDefaultFloorDb);

struct LsaOptions {
  double smoothing = 0.98;
  double floor_db = kDefaultFloorDb;
};

// Decision-directed LSA suppression with the noisy phase. Output length
// equals input length.
dsp::AudioBuffer lsa_denoise(const dsp::AudioBuffer& noisy, const NoisePsd& psd,
                             const LsaOptions& options = {});

}  // namespace phr::baseline
