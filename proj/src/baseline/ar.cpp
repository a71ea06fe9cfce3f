#include "phr/baseline/ar.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace phr::baseline {
namespace {

// 1 / Phi^-1(3/4): MAD to standard deviation for Gaussian data.
constexpr double kMadScale = 1.482602218505602;

double robust_sigma(std::vector<double> abs_err) {
  if (abs_err.empty()) return 0.0;
  const auto mid = abs_err.begin() + static_cast<std::ptrdiff_t>(abs_err.size() / 2);
  std::nth_element(abs_err.begin(), mid, abs_err.end());
  return kMadScale * *mid;
}

// Flags exceedances of samples [begin, end) of x under `model`.
void detect_range(std::span<const double> x, const ArModel& model, std::size_t begin,
                  std::size_t end, double k, std::vector<std::uint8_t>& flags,
                  std::size_t& exceedances) {
  const std::size_t p = model.order();
  begin = std::max(begin, p);
  if (begin >= end) return;
  std::vector<double> err(end - begin);
  for (std::size_t t = begin; t < end; ++t) {
    double pred = 0.0;
    for (std::size_t j = 0; j < p; ++j) pred += model.a[j] * x[t - 1 - j];
    err[t - begin] = x[t] - pred;
  }
  std::vector<double> mags(err.size());
  std::transform(err.begin(), err.end(), mags.begin(), [](double e) { return std::abs(e); });
  const double threshold = k * robust_sigma(mags);
  const std::size_t half = p / 2;
  for (std::size_t t = begin; t < end; ++t) {
    if (mags[t - begin] <= threshold) continue;
    ++exceedances;
    const std::size_t lo = t >= half ? t - half : 0;
    const std::size_t hi = std::min(x.size(), t + half + 1);
    std::fill(flags.begin() + static_cast<std::ptrdiff_t>(lo),
              flags.begin() + static_cast<std::ptrdiff_t>(hi), std::uint8_t{1});
  }
}

std::vector<Run> runs_of(const std::vector<std::uint8_t>& flags) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < flags.size();) {
    if (!flags[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < flags.size() && flags[j]) ++j;
    runs.push_back({i, j});
    i = j;
  }
  return runs;
}

// Drops runs longer than max_gap and fills in `runs`.
void finalize(ClickMask& mask, std::size_t max_gap) {
  for (const Run& r : runs_of(mask.flags)) {
    if (r.size() > max_gap) {
      ++mask.rejected_runs;
      std::fill(mask.flags.begin() + static_cast<std::ptrdiff_t>(r.begin),
                mask.flags.begin() + static_cast<std::ptrdiff_t>(r.end), std::uint8_t{0});
    } else {
      mask.runs.push_back(r);
    }
  }
}

std::size_t max_gap_samples(const DetectOptions& o, int rate) {
  return static_cast<std::size_t>(o.max_gap_seconds * rate + 0.5);
}

// Least-squares fill of the flagged samples in `cluster`, in place. Returns
// false if the banded solve fails.
bool solve_cluster(std::vector<double>& y, const std::vector<Run>& cluster, const ArModel& model) {
  const std::size_t p = model.order();
  std::vector<std::size_t> pos;
  for (const Run& r : cluster)
    for (std::size_t i = r.begin; i < r.end; ++i) pos.push_back(i);
  const std::size_t m = pos.size();
  const std::size_t first = pos.front(), last = pos.back();
  std::vector<std::ptrdiff_t> unknown(last - first + 1, -1);
  for (std::size_t u = 0; u < m; ++u) unknown[pos[u] - first] = static_cast<std::ptrdiff_t>(u);

  std::vector<double> c(p + 1);
  c[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) c[j] = -model.a[j - 1];

  // Lower band, column major, as dpbsv wants it.
  const std::size_t kd = std::min(p, m - 1);
  const std::size_t ld = kd + 1;
  std::vector<double> band(ld * m, 0.0);
  std::vector<double> rhs(m, 0.0);
  std::vector<std::pair<std::size_t, double>> touched;
  touched.reserve(p + 1);
  for (std::size_t t = first; t <= last + p; ++t) {
    touched.clear();
    double known = 0.0;
    for (std::size_t j = 0; j <= p; ++j) {
      const std::size_t s = t - j;
      const std::ptrdiff_t u = (s >= first && s <= last) ? unknown[s - first] : -1;
      if (u >= 0) {
        touched.emplace_back(static_cast<std::size_t>(u), c[j]);
      } else {
        known += c[j] * y[s];
      }
    }
    // touched is in decreasing unknown index
    for (std::size_t q = 0; q < touched.size(); ++q) {
      const auto [uq, cq] = touched[q];
      rhs[uq] -= cq * known;
      for (std::size_t r = q; r < touched.size(); ++r) {
        const auto [ur, cr] = touched[r];
        band[(uq - ur) + ur * ld] += cq * cr;
      }
    }
  }
  const lapack_int info = LAPACKE_dpbsv(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(m),
                                        static_cast<lapack_int>(kd), 1, band.data(),
                                        static_cast<lapack_int>(ld), rhs.data(),
                                        static_cast<lapack_int>(m));
  if (info != 0) return false;
  for (std::size_t u = 0; u < m; ++u) y[pos[u]] = rhs[u];
  return true;
}

}  // namespace

bool ArModel::stable() const {
  return std::all_of(reflection.begin(), reflection.end(),
                     [](double k) { return std::abs(k) < 1.0; });
}

ArModel ar_fit(std::span<const double> x, std::size_t order) {
  if (order == 0) throw std::invalid_argument("ar_fit: order must be positive");
  if (x.size() < 10 * order) {
    throw std::invalid_argument("ar_fit: need at least 10 * order samples");
  }
  const std::size_t n = x.size();
  std::vector<double> r(order + 1, 0.0);
  for (std::size_t k = 0; k <= order; ++k) {
    double s = 0.0;
    for (std::size_t i = k; i < n; ++i) s += x[i] * x[i - k];
    r[k] = s / static_cast<double>(n);
  }
  if (!(r[0] > 0.0) || !std::isfinite(r[0])) {
    throw std::invalid_argument("ar_fit: input has zero variance");
  }

  ArModel m;
  m.a.assign(order, 0.0);
  double err = r[0];
  std::vector<double> prev(order, 0.0);
  for (std::size_t i = 0; i < order; ++i) {
    // Perfectly predictable so far; higher coefficients stay zero.
    if (err <= r[0] * 1e-14) break;
    double acc = r[i + 1];
    for (std::size_t j = 0; j < i; ++j) acc -= m.a[j] * r[i - j];
    const double k = acc / err;
    prev = m.a;
    m.a[i] = k;
    for (std::size_t j = 0; j < i; ++j) m.a[j] = prev[j] - k * prev[i - 1 - j];
    err *= 1.0 - k * k;
    m.reflection.push_back(k);
  }
  m.sigma2 = std::max(err, r[0] * 1e-14);
  if (!m.stable()) std::cerr << "warning: ar_fit produced an unstable AR model\n";
  return m;
}

ArModel ar_fit(const dsp::AudioBuffer& x, std::size_t order) { return ar_fit(std::span(x.samples), order); }

std::vector<double> prediction_error(std::span<const double> x, const ArModel& model) {
  const std::size_t p = model.order();
  std::vector<double> e(x.size(), 0.0);
  for (std::size_t t = p; t < x.size(); ++t) {
    double pred = 0.0;
    for (std::size_t j = 0; j < p; ++j) pred += model.a[j] * x[t - 1 - j];
    e[t] = x[t] - pred;
  }
  return e;
}

std::size_t ClickMask::flagged() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), std::uint8_t{1}));
}

ClickMask detect_clicks(const dsp::AudioBuffer& x, const ArModel& model,
                        const DetectOptions& options) {
  ClickMask mask;
  mask.flags.assign(x.size(), 0);
  detect_range(x.samples, model, 0, x.size(), options.k, mask.flags, mask.exceedances);
  finalize(mask, max_gap_samples(options, x.sample_rate));
  return mask;
}

Interpolation ar_interpolate(const dsp::AudioBuffer& x, const ClickMask& mask,
                             const ArModel& model) {
  if (mask.flags.size() != x.size()) {
    throw std::invalid_argument("ar_interpolate: mask length does not match the signal");
  }
  Interpolation out{x, {}};
  const std::vector<Run> runs = runs_of(mask.flags);
  const std::size_t p = model.order();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i + 1;
    while (j < runs.size() && runs[j].begin - runs[j - 1].end < p) ++j;
    const std::vector<Run> cluster(runs.begin() + static_cast<std::ptrdiff_t>(i),
                                   runs.begin() + static_cast<std::ptrdiff_t>(j));
    const bool context = cluster.front().begin >= p && cluster.back().end + p <= n;
    if (!context || !solve_cluster(out.audio.samples, cluster, model)) {
      out.unrepaired.insert(out.unrepaired.end(), cluster.begin(), cluster.end());
    }
    i = j;
  }
  return out;
}

DeclickResult declick(const dsp::AudioBuffer& x, const DeclickOptions& o) {
  DeclickResult result{x, 0, {}};
  const std::size_t n = x.size();
  const std::size_t p = o.order;
  if (n < 10 * p || o.iterations == 0) return result;
  const std::size_t blocks = std::max<std::size_t>(1, n / std::max(o.block, 10 * p));
  const auto bound = [&](std::size_t b) { return b * n / blocks; };

  for (std::size_t it = 0; it < o.iterations; ++it) {
    ClickMask mask;
    mask.flags.assign(n, 0);
    std::vector<std::optional<ArModel>> models(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::span<const double> fit_on(result.audio.samples.data() + bound(b),
                                           bound(b + 1) - bound(b));
      double energy = 0.0;
      for (double v : fit_on) energy += v * v;
      if (energy == 0.0) continue;
      models[b] = ar_fit(fit_on, p);
      detect_range(x.samples, *models[b], bound(b), bound(b + 1), o.detect.k, mask.flags,
                   mask.exceedances);
    }
    finalize(mask, max_gap_samples(o.detect, x.sample_rate));

    // Repair from the original input with each run's own block model.
    dsp::AudioBuffer repaired = x;
    std::vector<Run> unrepaired;
    for (std::size_t b = 0; b < blocks; ++b) {
      if (!models[b]) continue;
      ClickMask part;
      part.flags.assign(n, 0);
      for (const Run& r : mask.runs) {
        if (r.begin < bound(b) || r.begin >= bound(b + 1)) continue;
        part.runs.push_back(r);
        std::fill(part.flags.begin() + static_cast<std::ptrdiff_t>(r.begin),
                  part.flags.begin() + static_cast<std::ptrdiff_t>(r.end), std::uint8_t{1});
      }
      if (part.runs.empty()) continue;
      Interpolation fixed = ar_interpolate(repaired, part, *models[b]);
      repaired = std::move(fixed.audio);
      unrepaired.insert(unrepaired.end(), fixed.unrepaired.begin(), fixed.unrepaired.end());
    }
    result.audio = std::move(repaired);
    result.clicks = mask.runs.size();
    result.unrepaired = std::move(unrepaired);
  }
  return result;
}

dsp::AudioBuffer lsa_c(const dsp::AudioBuffer& noisy, const std::optional<dsp::AudioBuffer>& noise_ref,
                       const LsaCOptions& options) {
  // A digitally silent reference says the record has no surface noise, so
  // there is nothing for the click stage to find either.
  const bool silent_ref = noise_ref && noise_ref->peak() == 0.0;
  const dsp::AudioBuffer repaired = silent_ref ? noisy : declick(noisy, options.declick).audio;
  NoisePsd psd;
  if (noise_ref) {
    psd = estimate_noise_psd(silent_ref ? *noise_ref : declick(*noise_ref, options.declick).audio,
                             options.stft);
  } else {
    psd = estimate_noise_psd_quiet_frames(repaired, options.quiet_fraction, options.stft);
  }
  return lsa_denoise(repaired, psd, options.lsa);
}

}  // namespace phr::baseline
