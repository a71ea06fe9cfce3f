#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "phr/dsp/audio.hpp"
#include "phr/dsp/stft.hpp"
#include "phr/baseline/lsa.hpp"

namespace phr::baseline {

// x[t] = sum_k a[k-1] x[t-k] + e[t], var(e) = sigma2.
struct ArModel {
  std::vector<double> a;
  double sigma2 = 0.0;
  // Reflection coefficients from the recursion; all |k| < 1 iff stable.
  std::vector<double> reflection;

  std::size_t order() const { return a.size(); }
  bool stable() const;
};

// Autocorrelation method with the Levinson-Durbin recursion. Needs at least
// 10 * order samples; zero-variance input is an invalid_argument.
ArModel ar_fit(std::span<const double> x, std::size_t order = 30);
ArModel ar_fit(const dsp::AudioBuffer& x, std::size_t order = 30);

// Forward prediction error e[t] for t >= order; zero before.
std::vector<double> prediction_error(std::span<const double> x, const ArModel& model);

struct Run {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  bool operator==(const Run&) const = default;
};

struct ClickMask {
  std::vector<std::uint8_t> flags;  // one per sample
  std::vector<Run> runs;            // accepted flagged runs
  std::size_t exceedances = 0;      // samples whose error crossed the threshold
  std::size_t rejected_runs = 0;    // longer than max_gap, left unflagged

  bool empty() const { return runs.empty(); }
  std::size_t flagged() const;
};

struct DetectOptions {
  double k = 3.5;
  double max_gap_seconds = 0.05;
};

// Flags |e[t]| > k * sigma_e, with sigma_e = 1.4826 * median|e|, dilated by
// order/2 samples either side. Merged runs longer than max_gap are dropped.
ClickMask detect_clicks(const dsp::AudioBuffer& x, const ArModel& model,
                        const DetectOptions& options = {});

struct Interpolation {
  dsp::AudioBuffer audio;
  std::vector<Run> unrepaired;  // gaps without `order` known samples on both sides
};

// Replaces flagged samples by the least-squares minimiser of the AR
// prediction error over every equation that touches them. Gaps closer than
// `order` samples are solved jointly.
Interpolation ar_interpolate(const dsp::AudioBuffer& x, const ClickMask& mask,
                             const ArModel& model);

struct DeclickOptions {
  std::size_t order = 30;
  DetectOptions detect;
  // The AR model is refitted per block so the error scale tracks the music.
  std::size_t block = 8192;
  std::size_t iterations = 2;
};

struct DeclickResult {
  dsp::AudioBuffer audio;
  std::size_t clicks = 0;
  std::vector<Run> unrepaired;
};

DeclickResult declick(const dsp::AudioBuffer& x, const DeclickOptions& options = {});

struct LsaCOptions {
  DeclickOptions declick;
  LsaOptions lsa;
  dsp::StftConfig stft;
  double quiet_fraction = 0.1;
};

// Click repair, then LSA suppression with the PSD of `noise_ref` (or of the
// quietest frames of the repaired input when there is none). A silent
// reference skips the click stage.
dsp::AudioBuffer lsa_c(const dsp::AudioBuffer& noisy,
                       const std::optional<dsp::AudioBuffer>& noise_ref,
                       const LsaCOptions& options = {});

}  // namespace phr::baseline
