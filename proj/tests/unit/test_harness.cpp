#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "phr/common/error.hpp"
#include "phr/data/synthetic.hpp"
#include "phr/harness/eval.hpp"
#include "phr/harness/metrics.hpp"
#include "phr/harness/pgm.hpp"
#include "test_util.hpp"

using namespace phr;
using namespace phr::harness;

namespace {

data::Manifest small_corpus(const std::string& name, std::size_t per_genre = 1) {
  data::CorpusOptions o;
  o.clean_per_genre = per_genre;
  o.noise_files = 2;
  o.clean_seconds = 6.0;
  o.noise_seconds = 3.0;
  return data::write_synthetic_corpus(phr::testing::scratch_dir(name), o);
}

}  // namespace

TEST(Metrics, SnrDefinitionAndCap) {
  const auto s = phr::testing::white_noise(10000, 1.0, 1);
  EXPECT_EQ(snr_db(s, s), kSnrCapDb);
  EXPECT_NEAR(snr_db(s, dsp::AudioBuffer::zeros(s.size())), 0.0, 1e-12);
  // n with exactly a hundredth of the power of s
  auto n = phr::testing::white_noise(10000, 1.0, 2);
  const double g = std::sqrt(s.power() / n.power() / 100.0);
  dsp::AudioBuffer est = s;
  for (std::size_t i = 0; i < s.size(); ++i) est.samples[i] += g * n.samples[i];
  EXPECT_NEAR(snr_db(s, est), 20.0, 1e-9);
  EXPECT_THROW(snr_db(dsp::AudioBuffer::zeros(10), dsp::AudioBuffer::zeros(10)), std::invalid_argument);
  EXPECT_THROW(snr_db(s, s.slice(0, 10)), std::invalid_argument);
}

TEST(Metrics, DeltaSnr) {
  const auto clean = phr::testing::white_noise(5000, 1.0, 3);
  auto noisy = clean;
  for (double& v : noisy.samples) v += 0.1;
  EXPECT_EQ(delta_snr(clean, noisy, noisy), 0.0);
  EXPECT_NEAR(delta_snr(clean, noisy, clean), kSnrCapDb - snr_db(clean, noisy), 1e-12);
}

TEST(Metrics, ResidualIsExact) {
  const auto a = phr::testing::white_noise(3000, 0.3, 4);
  const auto b = phr::testing::white_noise(3000, 0.2, 5);
  const auto r = residual_noise(a, b);
  // One rounding in the subtraction and one in the add back.
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double tol = std::ldexp(std::max(std::abs(a.samples[i]), std::abs(b.samples[i])), -52);
    EXPECT_NEAR(r.samples[i] + b.samples[i], a.samples[i], tol);
  }
  // A denoiser output within a factor of two of the input subtracts exactly.
  dsp::AudioBuffer near = a;
  for (double& v : near.samples) v *= 0.75;
  const auto rn = residual_noise(a, near);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(rn.samples[i] + near.samples[i], a.samples[i]);
  for (double v : residual_noise(a, a).samples) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(residual_noise(a, b.slice(0, 5)), std::invalid_argument);
}

TEST(Metrics, ResidualTracksTheNoise) {
  const auto clean = data::synth_music(data::Subgenre::Strings, 3.0, 6);
  const auto noise = data::synth_hiss(3.0, 7, 0.05);
  dsp::AudioBuffer noisy = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) noisy.samples[i] += noise.samples[i];
  const auto den = lsa_method().run(data::Mixture{noisy, clean, clean, noise, 1.0, 1.0, false});
  const auto r = residual_noise(noisy, den);
  const auto corr = [](const dsp::AudioBuffer& x, const dsp::AudioBuffer& y) {
    double xy = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xy += x.samples[i] * y.samples[i];
      xx += x.samples[i] * x.samples[i];
      yy += y.samples[i] * y.samples[i];
    }
    return xy / std::sqrt(xx * yy);
  };
  EXPECT_GT(corr(r, noise), corr(r, clean));
}

TEST(Metrics, LogSpectralDistance) {
  const auto a = phr::testing::white_noise(44100, 0.1, 8);
  EXPECT_EQ(log_spectral_distance(a, a), 0.0);
  dsp::AudioBuffer b = a;
  for (double& v : b.samples) v *= 2.0;
  // A gain of 2 is 20 log10(2) dB in every bin; white noise keeps nearly all
  // of them above the floor (a few edge bins of the padded frames are not).
  EXPECT_NEAR(log_spectral_distance(a, b), 20.0 * std::log10(2.0), 1e-4);
  // Silence against silence sits on the floor in both.
  EXPECT_EQ(log_spectral_distance(dsp::AudioBuffer::zeros(5000), dsp::AudioBuffer::zeros(5000)), 0.0);
}

TEST(TestSet, CountsBalanceAndDeterminism) {
  const auto m = small_corpus("testset", 2);
  const TestSet s = build_test_set(m, 2, {3.0, 10.0}, 11);
  EXPECT_EQ(s.items.size(), 16u);
  EXPECT_TRUE(s.warnings.empty());
  std::map<std::pair<double, data::Subgenre>, int> counts;
  for (const TestItem& it : s.items) {
    ++counts[{it.recipe.snr_db, it.genre}];
    EXPECT_EQ(m.find(it.recipe.clean_ref).subgenre, it.genre);
    EXPECT_GE(it.recipe.level_db, data::kLevelMinDb);
    EXPECT_LE(it.recipe.level_db, data::kLevelMaxDb);
  }
  for (const auto& [k, v] : counts) EXPECT_EQ(v, 2);
  const TestSet again = build_test_set(m, 2, {3.0, 10.0}, 11);
  for (std::size_t i = 0; i < s.items.size(); ++i) EXPECT_EQ(s.items[i].recipe, again.items[i].recipe);
  EXPECT_EQ(kFullScalePerGenre * 4 * 2, 800u);
}

TEST(TestSet, MissingGenreWarns) {
  auto m = small_corpus("testset_missing");
  std::erase_if(m.entries, [](const data::ManifestEntry& e) { return e.subgenre == data::Subgenre::Opera; });
  const TestSet s = build_test_set(m, 1, {3.0}, 1);
  EXPECT_EQ(s.items.size(), 3u);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("opera"), std::string::npos);
}

TEST(Evaluate, IdentityOracleAndLsa) {
  const auto m = small_corpus("eval");
  const TestSet s = build_test_set(m, 1, {3.0, 10.0}, 2);
  const EvalReport r = evaluate({identity_method(), oracle_method(), lsa_method()}, s, m);
  for (double c : {3.0, 10.0}) {
    EXPECT_EQ(r.cell(c, "identity").mean_delta_snr, 0.0);
    EXPECT_EQ(r.cell(c, "identity").count, 4u);
    EXPECT_GT(r.cell(c, "oracle").mean_delta_snr, 80.0);
    EXPECT_EQ(r.cell(c, "oracle").mean_lsd, 0.0);
    EXPECT_GT(r.cell(c, "lsa").mean_delta_snr, 0.0);
    for (data::Subgenre g : data::kAllSubgenres) EXPECT_EQ(r.cell(c, "identity", g).count, 1u);
  }
  const std::string table = format_report_table(r);
  EXPECT_NE(table.find("dSNR@3dB"), std::string::npos);
  EXPECT_NE(table.find("not comparable"), std::string::npos);
}

TEST(Evaluate, FailingMethodIsRecordedAsMissing) {
  const auto m = small_corpus("eval_fail");
  const TestSet s = build_test_set(m, 1, {3.0}, 3);
  int calls = 0;
  Method flaky{"flaky", [&](const data::Mixture& x) {
                 if (calls++ % 2 == 0) throw NumericalError("boom");
                 return x.noisy;
               }};
  const EvalReport r = evaluate({identity_method(), flaky}, s, m);
  EXPECT_EQ(r.cell(3.0, "flaky").count, 2u);
  EXPECT_EQ(r.cell(3.0, "flaky").missing, 2u);
  EXPECT_EQ(r.cell(3.0, "identity").missing, 0u);
  ASSERT_EQ(r.missing.size(), 2u);
  EXPECT_EQ(r.missing[0].error, "boom");
  EXPECT_NE(format_report_tsv(r).find("#missing\tflaky"), std::string::npos);
}

TEST(Evaluate, ReportIsDeterministic) {
  const auto m = small_corpus("eval_det");
  const TestSet s = build_test_set(m, 1, {3.0}, 4);
  const auto run = [&] { return format_report_tsv(evaluate({identity_method(), lsa_method()}, s, m)); };
  EXPECT_EQ(run(), run());
}

TEST(Methods, Parsing) {
  const auto ms = parse_methods("identity,lsa,oracle");
  ASSERT_EQ(ms.size(), 3u);
  EXPECT_EQ(ms[1].name, "lsa");
  EXPECT_THROW(parse_methods("identity,,lsa"), FormatError);
  EXPECT_THROW(parse_method("wiener"), FormatError);
  EXPECT_THROW(parse_method("model:/nonexistent.phr"), FormatError);
}

TEST(Pgm, LayoutAndLevels) {
  dsp::StftConfig cfg;
  cfg.window_size = 8;
  cfg.hop = 2;
  dsp::Spectrogram s(cfg, 3);
  // bins = 5; loudest at bin 0 frame 2, -40 dB at bin 4 frame 0, rest silent.
  s.real[s.index(0, 2)] = 1.0;
  s.imag[s.index(4, 0)] = 0.01;
  const std::string pgm = encode_spectrogram_pgm(s, 80.0);
  const std::string header = "P5\n3 5\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 15);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  const auto px = [&](std::size_t row, std::size_t col) {
    return static_cast<unsigned char>(pgm[header.size() + row * 3 + col]);
  };
  EXPECT_EQ(px(4, 2), 255);  // bin 0 is the bottom row
  EXPECT_EQ(px(0, 0), 128);  // halfway down the 80 dB range
  EXPECT_EQ(px(2, 1), 0);
  EXPECT_THROW(encode_spectrogram_pgm(s, 0.0), std::invalid_argument);
}
