#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <boost/math/special_functions/expint.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "phr/baseline/ar.hpp"
#include "phr/baseline/lsa.hpp"
#include "phr/data/synthetic.hpp"
#include "test_util.hpp"

using namespace phr;
using namespace phr::baseline;

namespace {

double oracle_gain(double xi, double gamma, double floor_db = -25.0) {
  const double v = xi * gamma / (1.0 + xi);
  const double g = xi / (1.0 + xi) * std::exp(0.5 * boost::math::expint(1, v));
  return std::max(g, std::pow(10.0, floor_db / 20.0));
}

double snr_db(const dsp::AudioBuffer& ref, const dsp::AudioBuffer& est) {
  double s = 0.0, e = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    s += ref.samples[i] * ref.samples[i];
    const double d = ref.samples[i] - est.samples[i];
    e += d * d;
  }
  return 10.0 * std::log10(s / e);
}

dsp::AudioBuffer add(const dsp::AudioBuffer& a, const dsp::AudioBuffer& b, double gb = 1.0) {
  dsp::AudioBuffer out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out.samples[i] += gb * b.samples[i];
  return out;
}

// Gain on `noise` so that clean : noise is `snr` dB.
double gain_for(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& noise, double snr) {
  return std::sqrt(clean.power() / noise.power()) * std::pow(10.0, -snr / 20.0);
}

dsp::AudioBuffer ar_process(const std::vector<double>& a, std::size_t n, double sigma,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  const std::size_t burn = 2000;
  std::vector<double> x(n + burn, 0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double v = g(rng);
    for (std::size_t k = 0; k < a.size() && k < t; ++k) v += a[k] * x[t - 1 - k];
    x[t] = v;
  }
  return dsp::AudioBuffer(std::vector<double>(x.begin() + burn, x.end()));
}

// A stable AR(p) from random reflection coefficients via the step-up recursion.
std::vector<double> random_stable_ar(std::size_t p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<double> a;
  for (std::size_t i = 0; i < p; ++i) {
    const double k = u(rng);
    std::vector<double> next(i + 1);
    for (std::size_t j = 0; j < i; ++j) next[j] = a[j] - k * a[i - 1 - j];
    next[i] = k;
    a = next;
  }
  return a;
}

ClickMask mask_of(std::size_t n, std::initializer_list<baseline::Run> runs) {
  ClickMask m;
  m.flags.assign(n, 0);
  for (const baseline::Run& r : runs) {
    m.runs.push_back(r);
    for (std::size_t i = r.begin; i < r.end; ++i) m.flags[i] = 1;
  }
  return m;
}

// Dense least-squares oracle: every equation touching a flagged sample,
// solved by QR on the explicit design matrix.
std::vector<double> dense_ls_fill(const std::vector<double>& x, const std::vector<std::uint8_t>& flags,
                                  const std::vector<double>& a) {
  const std::size_t p = a.size();
  std::vector<std::size_t> unknown;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (flags[i]) unknown.push_back(i);
  const std::size_t first = unknown.front(), last = unknown.back();
  const std::size_t rows = last + p - first + 1;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                            static_cast<Eigen::Index>(unknown.size()));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
  for (std::size_t t = first; t <= last + p; ++t) {
    const auto r = static_cast<Eigen::Index>(t - first);
    for (std::size_t j = 0; j <= p; ++j) {
      const double c = j == 0 ? 1.0 : -a[j - 1];
      const auto it = std::find(unknown.begin(), unknown.end(), t - j);
      if (it != unknown.end()) {
        A(r, it - unknown.begin()) += c;
      } else {
        b(r) -= c * x[t - j];
      }
    }
  }
  const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(b);
  std::vector<double> out = x;
  for (std::size_t u = 0; u < unknown.size(); ++u) out[unknown[u]] = sol(static_cast<Eigen::Index>(u));
  return out;
}

}  // namespace

TEST(ExpInt, MatchesBoost) {
  for (double v = 1e-8; v < 700.0; v *= 1.07) {
    const double want = boost::math::expint(1, v);
    EXPECT_NEAR(expint_e1(v), want, 1e-13 * want) << v;
  }
  EXPECT_NEAR(expint_e1(0.5), 0.5597735947761608, 1e-15);
  EXPECT_THROW(expint_e1(0.0), std::invalid_argument);
}

TEST(LsaGain, MatchesOracleOverRange) {
  for (double xi = 1e-3; xi <= 1e3; xi *= 1.2) {
    for (double gamma = 1e-3; gamma <= 1e3; gamma *= 1.2) {
      const double want = oracle_gain(xi, gamma);
      EXPECT_NEAR(lsa_gain(xi, gamma), want, 1e-6 * want) << xi << " " << gamma;
    }
  }
}

TEST(LsaGain, KnownValueAsymptoteAndFloor) {
  EXPECT_NEAR(lsa_gain(1.0, 1.0), 0.6615, 5e-5);
  EXPECT_NEAR(lsa_gain(1e6, 1e6), 1.0, 1e-5);
  const double floor = std::pow(10.0, -25.0 / 20.0);
  EXPECT_EQ(lsa_gain(1e-4, 50.0), floor);
  EXPECT_EQ(lsa_gain(1e-2, 1e3, -10.0), std::pow(10.0, -0.5));
  EXPECT_THROW(lsa_gain(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(lsa_gain(1.0, -1.0), std::invalid_argument);
}

TEST(NoisePsd, WhiteNoiseIsFlat) {
  const double sigma = 0.05;
  const auto noise = phr::testing::white_noise(dsp::seconds_to_samples(10.0), sigma, 3);
  const dsp::StftConfig cfg;
  const NoisePsd psd = estimate_noise_psd(noise, cfg);
  ASSERT_GE(psd.frames_used, 100u);
  double w2 = 0.0;
  for (double w : dsp::analysis_window(cfg)) w2 += w * w;
  const double expected = sigma * sigma * w2;
  for (std::size_t k = 2; k + 2 < psd.power.size(); ++k) {
    EXPECT_LT(std::abs(10.0 * std::log10(psd.power[k] / expected)), 1.0) << k;
  }
}

TEST(NoisePsd, ScalingZeroAndLength) {
  const auto noise = phr::testing::white_noise(44100, 0.1, 4);
  const NoisePsd p1 = estimate_noise_psd(noise);
  dsp::AudioBuffer twice = noise;
  for (double& v : twice.samples) v *= 2.0;
  const NoisePsd p2 = estimate_noise_psd(twice);
  for (std::size_t k = 0; k < p1.power.size(); ++k) EXPECT_DOUBLE_EQ(p2.power[k], 4.0 * p1.power[k]);
  const NoisePsd z = estimate_noise_psd(dsp::AudioBuffer::zeros(44100));
  for (double v : z.power) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(estimate_noise_psd(dsp::AudioBuffer::zeros(44099)), std::invalid_argument);
}

TEST(NoisePsd, QuietFramesPickTheNoiseOnlyPart) {
  const auto hiss = phr::testing::white_noise(dsp::seconds_to_samples(4.0), 0.01, 5);
  auto music = data::synth_music(data::Subgenre::Strings, 4.0, 6);
  for (std::size_t i = 0; i < dsp::seconds_to_samples(1.0); ++i) music.samples[i] = 0.0;
  const NoisePsd quiet = estimate_noise_psd_quiet_frames(add(music, hiss), 0.1);
  const NoisePsd ref = estimate_noise_psd(hiss);
  double lq = 0.0, lr = 0.0;
  for (std::size_t k = 0; k < ref.power.size(); ++k) {
    lq += quiet.power[k];
    lr += ref.power[k];
  }
  EXPECT_LT(std::abs(10.0 * std::log10(lq / lr)), 1.0);
}

TEST(LsaDenoise, ZeroPsdIsNearIdentity) {
  const auto x = data::synth_music(data::Subgenre::Piano, 2.0, 7);
  NoisePsd psd;
  psd.power.assign(psd.config.bins(), 0.0);
  const auto y = lsa_denoise(x, psd);
  ASSERT_EQ(y.size(), x.size());
  EXPECT_GT(snr_db(x, y), 100.0);
}

TEST(LsaDenoise, SinusoidInWhiteNoise) {
  const std::size_t n = dsp::seconds_to_samples(4.0);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = 0.1 * std::sin(2.0 * std::numbers::pi * 997.0 * i / 44100.0);
  const dsp::AudioBuffer clean(s);
  const auto noise = phr::testing::white_noise(n, 1.0, 8);
  const double g = gain_for(clean, noise, 3.0);
  const dsp::AudioBuffer noisy = add(clean, noise, g);
  dsp::AudioBuffer ref = phr::testing::white_noise(n, g, 9);
  const auto out = lsa_denoise(noisy, estimate_noise_psd(ref));
  EXPECT_GE(snr_db(clean, out) - snr_db(clean, noisy), 10.0);
}

TEST(LsaDenoise, HissFloorDropsInMusicFreeRegion) {
  const std::size_t n = dsp::seconds_to_samples(4.0);
  auto music = data::synth_music(data::Subgenre::Piano, 4.0, 10);
  const std::size_t quiet = dsp::seconds_to_samples(1.5);
  for (std::size_t i = 0; i < quiet; ++i) music.samples[i] = 0.0;
  const auto hiss = data::synth_hiss(4.0, 11, 0.02);
  const auto out = lsa_denoise(add(music, hiss), estimate_noise_psd(data::synth_hiss(2.0, 12, 0.02)));
  // Skip the first and last window of the quiet stretch.
  const dsp::AudioBuffer in_q = hiss.slice(2048, quiet - 4096);
  const dsp::AudioBuffer out_q = out.slice(2048, quiet - 4096);
  EXPECT_GE(10.0 * std::log10(in_q.power() / out_q.power()), 15.0);
  (void)n;
}

TEST(ArFit, RecoversAr1) {
  const auto x = ar_process({0.9}, 100000, 1.0, 13);
  const ArModel m = ar_fit(x, 1);
  EXPECT_NEAR(m.a[0], 0.9, 0.02);
  EXPECT_TRUE(m.stable());
  EXPECT_LE(m.sigma2, x.power());
}

TEST(ArFit, WhiteNoiseHasSmallCoefficients) {
  const auto x = phr::testing::white_noise(100000, 1.0, 14);
  const ArModel m = ar_fit(x, 30);
  for (double a : m.a) EXPECT_LT(std::abs(a), 0.05);
  EXPECT_LE(m.sigma2, x.power());
}

TEST(ArFit, PredictionErrorVarianceBelowInput) {
  const auto x = ar_process(random_stable_ar(30, 15), 20000, 1.0, 16);
  const ArModel m = ar_fit(x, 30);
  EXPECT_LE(m.sigma2, x.power());
  EXPECT_TRUE(m.stable());
}

TEST(ArFit, RejectsDegenerateInput) {
  EXPECT_THROW(ar_fit(dsp::AudioBuffer::zeros(1000), 30), std::invalid_argument);
  EXPECT_THROW(ar_fit(phr::testing::white_noise(299, 1.0, 1), 30), std::invalid_argument);
}

TEST(DetectClicks, FalseFlagRateOnCleanAr) {
  const auto x = ar_process(random_stable_ar(30, 17), 200000, 1.0, 18);
  const ArModel m = ar_fit(x, 30);
  const ClickMask mask = detect_clicks(x, m);
  EXPECT_LT(static_cast<double>(mask.exceedances) / static_cast<double>(x.size()), 1e-3);
}

TEST(DetectClicks, FindsImpulse) {
  auto x = ar_process({0.9}, 44100, 1.0, 19);
  const double target_rms = std::pow(10.0, -20.0 / 20.0);
  const double g = target_rms / x.rms();
  for (double& v : x.samples) v *= g;
  const std::size_t at = 20000;
  x.samples[at] += 0.5;
  const ArModel m = ar_fit(x, 30);
  const ClickMask mask = detect_clicks(x, m);
  EXPECT_EQ(mask.flags[at], 1);
  bool in_run = false;
  for (const baseline::Run& r : mask.runs) in_run = in_run || (r.begin <= at && at < r.end);
  EXPECT_TRUE(in_run);
}

TEST(DetectClicks, ZeroSignalHasEmptyMask) {
  ArModel m;
  m.a.assign(30, 0.01);
  m.sigma2 = 1.0;
  const ClickMask mask = detect_clicks(dsp::AudioBuffer::zeros(10000), m);
  EXPECT_TRUE(mask.empty());
  EXPECT_EQ(mask.flagged(), 0u);
}

TEST(DetectClicks, LongRunsAreRejected) {
  auto x = ar_process({0.5}, 44100, 0.01, 20);
  for (std::size_t i = 10000; i < 14000; ++i) x.samples[i] += (i % 2 ? 1.0 : -1.0);
  const ArModel m = ar_fit(x.slice(20000, 20000), 30);
  const ClickMask mask = detect_clicks(x, m);
  EXPECT_GE(mask.rejected_runs, 1u);
  for (const baseline::Run& r : mask.runs) EXPECT_LE(r.size(), 2205u);
  EXPECT_EQ(mask.flags[12000], 0);
}

TEST(ArInterpolate, Ar1ClosedForm) {
  const double a = 0.9;
  ArModel m;
  m.a = {a};
  m.sigma2 = 1.0;
  dsp::AudioBuffer x(std::vector<double>{1.0, 1.0, 1.0, 7.0, 1.0, 1.0, 1.0});
  const auto out = ar_interpolate(x, mask_of(x.size(), {{3, 4}}), m);
  EXPECT_NEAR(out.audio.samples[3], 2.0 * a / (1.0 + a * a), 1e-9);
  EXPECT_TRUE(out.unrepaired.empty());
  // Everything else untouched.
  for (std::size_t i : {0, 1, 2, 4, 5, 6}) EXPECT_EQ(out.audio.samples[i], 1.0);
}

TEST(ArInterpolate, MatchesDenseLeastSquares) {
  const auto a = random_stable_ar(30, 21);
  ArModel m;
  m.a = a;
  m.sigma2 = 1.0;
  auto x = ar_process(a, 4000, 1.0, 22);
  // Two gaps close enough to be solved together, and one on its own.
  const ClickMask mask = mask_of(x.size(), {{500, 540}, {560, 565}, {2000, 2100}});
  for (const baseline::Run& r : mask.runs)
    for (std::size_t i = r.begin; i < r.end; ++i) x.samples[i] = 5.0;
  const auto out = ar_interpolate(x, mask, m);
  const auto want = dense_ls_fill(x.samples, mask.flags, a);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.audio.samples[i], want[i], 1e-9) << i;
}

TEST(ArInterpolate, EmptyMaskIsBitExact) {
  const auto x = phr::testing::white_noise(5000, 1.0, 23);
  const ArModel m = ar_fit(x, 30);
  const auto out = ar_interpolate(x, mask_of(x.size(), {}), m);
  EXPECT_EQ(out.audio.samples, x.samples);
}

TEST(ArInterpolate, NormalEquationsHold) {
  const auto a = random_stable_ar(30, 24);
  const double sigma = 0.3;
  auto x = ar_process(a, 6000, sigma, 25);
  ArModel m;
  m.a = a;
  m.sigma2 = sigma * sigma;
  const ClickMask mask = mask_of(x.size(), {{1000, 1050}, {3000, 3007}});
  const auto out = ar_interpolate(x, mask, m);
  const auto e = prediction_error(out.audio.samples, m);
  // d/dx_s of sum_t e_t^2 is 2 sum_j c_j e_{s+j}
  double worst = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    if (!mask.flags[s]) continue;
    double g = 2.0 * e[s];
    for (std::size_t j = 1; j <= 30; ++j) g -= 2.0 * a[j - 1] * e[s + j];
    worst = std::max(worst, std::abs(g));
  }
  EXPECT_LT(worst, 1e-8 * m.sigma2);
}

TEST(ArInterpolate, ReconstructsExcisedSamples) {
  const auto a = random_stable_ar(30, 26);
  const auto x = ar_process(a, 50000, 1.0, 27);
  const ArModel m = ar_fit(x, 30);
  // 1% of the samples, in 10-sample gaps 1000 apart.
  ClickMask mask;
  mask.flags.assign(x.size(), 0);
  for (std::size_t s = 500; s + 10 < x.size() - 500; s += 1000)
    for (std::size_t i = s; i < s + 10; ++i) mask.flags[i] = 1;
  dsp::AudioBuffer damaged = x;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (mask.flags[i]) damaged.samples[i] = 0.0;
  const auto out = ar_interpolate(damaged, mask, m);
  double err = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!mask.flags[i]) continue;
    const double d = out.audio.samples[i] - x.samples[i];
    err += d * d;
    ++count;
  }
  EXPECT_LT(err / static_cast<double>(count), m.sigma2);
}

TEST(ArInterpolate, EdgeGapIsReported) {
  const auto x = phr::testing::white_noise(1000, 1.0, 28);
  const ArModel m = ar_fit(x, 30);
  const auto out = ar_interpolate(x, mask_of(x.size(), {{10, 12}, {500, 502}, {990, 995}}), m);
  ASSERT_EQ(out.unrepaired.size(), 2u);
  EXPECT_EQ(out.unrepaired[0], (baseline::Run{10, 12}));
  EXPECT_EQ(out.unrepaired[1], (baseline::Run{990, 995}));
  EXPECT_EQ(out.audio.samples[10], x.samples[10]);
  EXPECT_NE(out.audio.samples[500], x.samples[500]);
}

TEST(LsaC, ClickFreeMatchesPlainLsa) {
  const auto clean = data::synth_music(data::Subgenre::Strings, 3.0, 29);
  const auto hiss = data::synth_hiss(3.0, 30);
  const auto noisy = add(clean, hiss, gain_for(clean, hiss, 10.0));
  const auto ref = data::synth_hiss(2.0, 31, hiss.rms() * gain_for(clean, hiss, 10.0));
  const auto a = lsa_c(noisy, ref);
  const auto b = lsa_denoise(noisy, estimate_noise_psd(ref));
  // Exceedances on the music itself still get re-interpolated, so the click
  // stage is only close to the identity.
  EXPECT_GT(snr_db(b, a), 15.0);
}

TEST(LsaC, RemovesClicksAndHiss) {
  const double seconds = 4.0;
  const auto clean = data::synth_music(data::Subgenre::Piano, seconds, 32);
  const auto hiss = data::synth_hiss(seconds, 33);
  const double g = gain_for(clean, hiss, 3.0);
  dsp::AudioBuffer noise = hiss;
  for (double& v : noise.samples) v *= g;
  std::mt19937_64 rng(34);
  std::uniform_int_distribution<std::size_t> where(5000, clean.size() - 5000);
  std::vector<std::size_t> clicks;
  for (int c = 0; c < 20; ++c) {
    const std::size_t at = where(rng);
    clicks.push_back(at);
    for (std::size_t j = 0; j < 6; ++j) noise.samples[at + j] += 0.5 * std::exp(-0.6 * j) * (j % 2 ? -1 : 1);
  }
  const auto noisy = add(clean, noise);
  dsp::AudioBuffer ref = data::synth_hiss(2.0, 35);
  for (double& v : ref.samples) v *= g;

  const DeclickOptions dopt;
  const DeclickResult fixed = declick(noisy, dopt);
  // Post-repair prediction errors around each click sit under the threshold.
  for (std::size_t at : clicks) {
    const std::size_t b0 = at > 4096 ? at - 4096 : 0;
    const auto block = fixed.audio.slice(b0, 8192);
    const ArModel m = ar_fit(block, 30);
    const auto e = prediction_error(block.samples, m);
    std::vector<double> mags;
    for (std::size_t t = 30; t < e.size(); ++t) mags.push_back(std::abs(e[t]));
    std::vector<double> sorted = mags;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double sigma = 1.482602218505602 * sorted[sorted.size() / 2];
    for (std::size_t j = 0; j < 6; ++j) EXPECT_LT(std::abs(e[at - b0 + j]), 3.5 * sigma) << at;
  }

  const auto out = lsa_c(noisy, ref);
  EXPECT_GT(snr_db(clean, out) - snr_db(clean, noisy), 5.0);
}

TEST(LsaC, IdempotentOnCleanInput) {
  const auto clean = data::synth_music(data::Subgenre::Orchestral, 3.0, 36);
  const auto out = lsa_c(clean, dsp::AudioBuffer::zeros(44100));
  dsp::AudioBuffer diff = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) diff.samples[i] -= out.samples[i];
  EXPECT_LT(20.0 * std::log10(diff.rms()), -60.0);
}

TEST(LsaC, FallsBackToQuietFrames) {
  auto clean = data::synth_music(data::Subgenre::Opera, 4.0, 37);
  for (std::size_t i = 0; i < 44100; ++i) clean.samples[i] = 0.0;
  const auto hiss = data::synth_hiss(4.0, 38);
  const auto noisy = add(clean, hiss, gain_for(clean, hiss, 3.0));
  const auto out = lsa_c(noisy, std::nullopt);
  EXPECT_GT(snr_db(clean, out) - snr_db(clean, noisy), 3.0);
}
