#pragma once

#include "phr/dsp/audio.hpp"
#include "phr/dsp/stft.hpp"

namespace phr::harness {

inline constexpr double kSnrCapDb = 100.0;

// 10 log10(P_ref / P_(ref - est)), capped at kSnrCapDb. Zero reference or a
// length mismatch is an invalid_argument.
double snr_db(const dsp::AudioBuffer& reference, const dsp::AudioBuffer& estimate);

// snr(clean, denoised) - snr(clean, noisy).
double delta_snr(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& noisy,
                 const dsp::AudioBuffer& denoised);

// noisy - denoised, sample by sample.
dsp::AudioBuffer residual_noise(const dsp::AudioBuffer& noisy, const dsp::AudioBuffer& denoised);

// Mean over frames of the RMS (over all bins) difference between the dB
// power spectra. Powers are floored at -100 dB relative to full scale
// before taking logs so silent bins stay finite.
double log_spectral_distance(const dsp::AudioBuffer& reference, const dsp::AudioBuffer& estimate,
                             const dsp::StftConfig& cfg = {});

}  // namespace phr::harness
