#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "phr/common/error.hpp"
#include "phr/data/manifest.hpp"
#include "phr/data/mixture.hpp"
#include "phr/data/noise.hpp"
#include "phr/data/synthetic.hpp"
#include "phr/dsp/wav.hpp"
#include "test_util.hpp"

using namespace phr;
using namespace phr::data;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

double window_rms_db(const dsp::AudioBuffer& a, std::size_t begin, std::size_t len) {
  double s = 0.0;
  for (std::size_t i = begin; i < begin + len; ++i) s += a.samples[i] * a.samples[i];
  return 10.0 * std::log10(s / static_cast<double>(len));
}

dsp::AudioBuffer concat(std::initializer_list<dsp::AudioBuffer> parts) {
  std::vector<double> v;
  for (const auto& p : parts) v.insert(v.end(), p.samples.begin(), p.samples.end());
  return dsp::AudioBuffer(std::move(v));
}

Manifest sample_manifest() {
  Manifest m;
  ManifestEntry a;
  a.path = "clean/piano_0.wav";
  a.role = Role::Clean;
  a.duration = 8.0;
  a.subgenre = Subgenre::Piano;
  a.sha256 = std::string(64, 'a');
  ManifestEntry b;
  b.path = "noise/78rpm side A.wav";
  b.role = Role::Noise;
  b.duration = 2.35;
  b.sha256 = std::string(64, '0');
  b.needs_review = true;
  m.entries = {a, b};
  return m;
}

}  // namespace

TEST(Manifest, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Manifest, WriteReadWriteIsByteIdentical) {
  const auto dir = phr::testing::scratch_dir("manifest_rt");
  write_manifest(dir / "a.tsv", sample_manifest());
  const Manifest back = read_manifest(dir / "a.tsv", Verify::No);
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].path, "noise/78rpm side A.wav");
  EXPECT_TRUE(back.entries[1].needs_review);
  EXPECT_FALSE(back.entries[0].needs_review);
  EXPECT_EQ(back.entries[0].subgenre, Subgenre::Piano);
  write_manifest(dir / "b.tsv", back);
  EXPECT_EQ(slurp(dir / "a.tsv"), slurp(dir / "b.tsv"));
}

TEST(Manifest, ChecksumsVerifyAtLoad) {
  const auto dir = phr::testing::scratch_dir("manifest_sha");
  std::filesystem::create_directories(dir / "clean");
  dsp::write_wav(dir / "clean" / "x.wav", phr::testing::white_noise(4410, 0.1, 3));
  Manifest m;
  m.entries.push_back(describe_file(dir / "clean" / "x.wav", dir, Role::Clean, Subgenre::Opera));
  EXPECT_EQ(m.entries[0].path, "clean/x.wav");
  EXPECT_NEAR(m.entries[0].duration, 0.1, 1e-12);
  write_manifest(dir / "m.tsv", m);
  EXPECT_NO_THROW(read_manifest(dir / "m.tsv"));

  dsp::write_wav(dir / "clean" / "x.wav", phr::testing::white_noise(4410, 0.1, 4));
  EXPECT_THROW(read_manifest(dir / "m.tsv"), FormatError);
  EXPECT_NO_THROW(read_manifest(dir / "m.tsv", Verify::No));
  std::filesystem::remove(dir / "clean" / "x.wav");
  EXPECT_THROW(read_manifest(dir / "m.tsv"), FormatError);
}

TEST(Manifest, RejectsMalformedLines) {
  const std::string sha(64, 'b');
  const auto bad = [&](const std::string& line) {
    EXPECT_THROW(parse_manifest(line + "\n", "."), FormatError) << line;
  };
  bad("a.wav\tclean\t1.0\t-\t" + sha);               // clean without subgenre
  bad("a.wav\tnoise\t1.0\tpiano\t" + sha);           // noise with subgenre
  bad("a.wav\tmusic\t1.0\tpiano\t" + sha);           // unknown role
  bad("a.wav\tclean\tlong\tpiano\t" + sha);          // duration
  bad("a.wav\tclean\t1.0\tjazz\t" + sha);            // subgenre
  bad("a.wav\tclean\t1.0\tpiano\tABC");              // digest
  bad("a.wav\tclean\t1.0\tpiano\t" + sha + "\tyes");  // flag column
  bad("a.wav\tclean\t1.0\tpiano");                   // field count
  EXPECT_EQ(parse_manifest("# comment\n\na.wav\tclean\t1\tstrings\t" + sha + "\n", ".").entries.size(), 1u);
}

TEST(ExtractNoise, StationaryNoiseGivesOneSegment) {
  const auto noise = phr::testing::white_noise(6 * 44100, 0.01, 11);
  const auto segs = extract_noise_segments(noise, "n");
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_LT(segs[0].start, 0.2);
  EXPECT_GT(segs[0].end, 5.8);
  EXPECT_TRUE(segs[0].needs_review);
  EXPECT_GT(segs[0].rms, 0.0);
  EXPECT_EQ(segs[0].source_id, "n");
}

TEST(ExtractNoise, LoudMusicGivesNothing) {
  const auto music = synth_music(Subgenre::Strings, 8.0, 5, 0.2);
  EXPECT_TRUE(extract_noise_segments(music, "m").empty());
}

TEST(ExtractNoise, FindsBothNoiseRunsAroundMusic) {
  // 3 s noise at -40 dBFS, 10 s music 20 dB louder, 3 s noise.
  const auto audio = concat({phr::testing::white_noise(3 * 44100, 0.01, 1),
                             synth_music(Subgenre::Strings, 10.0, 2, 0.1),
                             phr::testing::white_noise(3 * 44100, 0.01, 3)});
  const auto segs = extract_noise_segments(audio, "fixture");
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_NEAR(segs[0].start, 0.0, 0.2);
  EXPECT_NEAR(segs[0].end, 3.0, 0.2);
  EXPECT_NEAR(segs[1].start, 13.0, 0.2);
  EXPECT_NEAR(segs[1].end, 16.0, 0.2);
}

TEST(ExtractNoise, DropsRunsShorterThanMinimum) {
  const auto audio = concat({phr::testing::white_noise(44100, 0.01, 1),
                             synth_music(Subgenre::Strings, 4.0, 2, 0.1),
                             phr::testing::white_noise(44100, 0.01, 3)});
  EXPECT_TRUE(extract_noise_segments(audio, "short").empty());
}

TEST(ExtendNoise, TwoSecondsToFiveUsesTwoCrossfades) {
  const auto seg = phr::testing::white_noise(2 * 44100, 0.05, 8);
  const auto ext = extend_noise(seg, 5 * 44100);
  EXPECT_EQ(ext.audio.size(), 5u * 44100);
  ASSERT_EQ(ext.crossfades.size(), 2u);
  EXPECT_EQ(ext.crossfades[0], 66150u);   // 1.5 s
  EXPECT_EQ(ext.crossfades[1], 132300u);  // 3.0 s
  // Outside the fades the output is a verbatim copy of the segment.
  for (std::size_t i = 0; i < 66150; ++i) ASSERT_EQ(ext.audio.samples[i], seg.samples[i]);
  for (std::size_t i = 88200; i < 132300; ++i) ASSERT_EQ(ext.audio.samples[i], seg.samples[i - 66150]);
}

TEST(ExtendNoise, ShortTargetTruncates) {
  const auto seg = phr::testing::white_noise(3 * 44100, 0.05, 8);
  const auto ext = extend_noise(seg, 44100);
  EXPECT_TRUE(ext.crossfades.empty());
  ASSERT_EQ(ext.audio.size(), 44100u);
  for (std::size_t i = 0; i < 44100; ++i) ASSERT_EQ(ext.audio.samples[i], seg.samples[i]);
}

TEST(ExtendNoise, RejectsSegmentsShorterThanTwoFades) {
  EXPECT_THROW(extend_noise(phr::testing::white_noise(44099, 0.1, 1), 5 * 44100),
               std::invalid_argument);
  EXPECT_NO_THROW(extend_noise(phr::testing::white_noise(44100, 0.1, 1), 5 * 44100));
}

TEST(ExtendNoise, EveryHalfSecondWindowKeepsTheLevel) {
  const auto seg = phr::testing::white_noise(2 * 44100, 0.05, 21);
  const auto ext = extend_noise(seg, 9 * 44100);
  const double ref = 10.0 * std::log10(seg.power());
  const std::size_t win = 22050;
  for (std::size_t at = 0; at + win <= ext.audio.size(); at += 2205) {
    EXPECT_NEAR(window_rms_db(ext.audio, at, win), ref, 1.0) << at;
  }
}

TEST(ExtendNoise, SeamsAreNoRougherThanTheSegment) {
  const auto seg = phr::testing::white_noise(2 * 44100, 0.05, 23);
  const auto ext = extend_noise(seg, 5 * 44100);
  const auto jump = [](const std::vector<double>& x, std::size_t i) { return std::abs(x[i] - x[i - 1]); };
  double inside = 0.0, inside_ms = 0.0;
  for (std::size_t i = 1; i < seg.size(); ++i) {
    inside = std::max(inside, jump(seg.samples, i));
    inside_ms += jump(seg.samples, i) * jump(seg.samples, i);
  }
  inside_ms /= static_cast<double>(seg.size() - 1);
  for (std::size_t at : ext.crossfades) {
    // Entering and leaving the fade.
    for (std::size_t i : {at, at + 1, at + 22049, at + 22050}) EXPECT_LE(jump(ext.audio.samples, i), inside);
    double ms = 0.0;
    for (std::size_t i = at + 1; i < at + 22050; ++i) ms += jump(ext.audio.samples, i) * jump(ext.audio.samples, i);
    EXPECT_NEAR(10.0 * std::log10(ms / 22049.0 / inside_ms), 0.0, 0.5);
  }
}

TEST(Alpha, KnownValues) {
  const auto y = phr::testing::white_noise(10000, 0.3, 1);
  const auto n = y;
  EXPECT_DOUBLE_EQ(alpha_for_snr(y, n, 0.0), 1.0);
  EXPECT_NEAR(alpha_for_snr(y, n, 20.0), 0.1, 1e-15);
  EXPECT_THROW(alpha_for_snr(y, dsp::AudioBuffer::zeros(10000), 0.0), std::invalid_argument);
  EXPECT_THROW(alpha_for_snr(y, dsp::AudioBuffer::zeros(10), 0.0), std::invalid_argument);
}

TEST(Alpha, MeasuredSnrMatchesRequest) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> snr(-10.0, 40.0);
  for (int k = 0; k < 50; ++k) {
    const auto y = phr::testing::white_noise(5000, 0.2, rng());
    const auto n = phr::testing::white_noise(5000, 0.03, rng());
    const double target = snr(rng);
    const double a = alpha_for_snr(y, n, target);
    long double py = 0, pn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      py += static_cast<long double>(y.samples[i]) * y.samples[i];
      const long double v = static_cast<long double>(a) * n.samples[i];
      pn += v * v;
    }
    EXPECT_NEAR(10.0 * std::log10(static_cast<double>(py / pn)), target, 1e-6);
  }
}

TEST(Mixture, LevelScalesNoisyAndTargetAlike) {
  const auto clean = phr::testing::white_noise(6 * 44100, 0.1, 1);
  const auto noise = phr::testing::white_noise(6 * 44100, 0.1, 2);
  const MixtureRecipe r{"c", "n", 0.0, -6.0, 42};
  const Mixture m = make_mixture(r, clean, noise);
  EXPECT_NEAR(m.beta, 0.501187233627, 1e-12);
  ASSERT_EQ(m.noisy.size(), 5u * 44100);
  for (std::size_t i = 0; i < m.noisy.size(); i += 997) {
    EXPECT_EQ(m.target.samples[i], m.beta * m.clean.samples[i]);
    EXPECT_NEAR(m.noisy.samples[i], m.beta * (m.clean.samples[i] + m.alpha * m.noise.samples[i]), 1e-15);
  }
  EXPECT_FALSE(m.clipped);
}

TEST(Mixture, SameRecipeIsBitIdentical) {
  const auto clean = phr::testing::white_noise(7 * 44100, 0.1, 1);
  const auto noise = phr::testing::white_noise(6 * 44100, 0.1, 2);
  const MixtureRecipe r{"c", "n", 7.5, 1.0, 99};
  const Mixture a = make_mixture(r, clean, noise), b = make_mixture(r, clean, noise);
  EXPECT_EQ(a.noisy.samples, b.noisy.samples);
  EXPECT_EQ(a.target.samples, b.target.samples);
  MixtureRecipe other = r;
  other.seed = 100;
  EXPECT_NE(make_mixture(other, clean, noise).noisy.samples, a.noisy.samples);
}

TEST(Mixture, ShortNoiseIsExtended) {
  const auto clean = phr::testing::white_noise(5 * 44100, 0.1, 1);
  const auto noise = phr::testing::white_noise(2 * 44100, 0.1, 2);
  const Mixture m = make_mixture({"c", "n", 10.0, 0.0, 1}, clean, noise);
  EXPECT_EQ(m.noise.size(), 5u * 44100);
  EXPECT_THROW(make_mixture({"c", "n", 10.0, 0.0, 1}, clean.slice(0, 44100), noise), FormatError);
}

TEST(Mixture, ClippingIsFlaggedNotApplied) {
  std::vector<double> loud(5 * 44100);
  for (std::size_t i = 0; i < loud.size(); ++i) loud[i] = 0.9 * std::sin(0.01 * i);
  const Mixture m = make_mixture({"c", "n", 20.0, 4.0, 1}, dsp::AudioBuffer(loud),
                                 phr::testing::white_noise(5 * 44100, 0.1, 2));
  EXPECT_TRUE(m.clipped);
  EXPECT_GT(m.noisy.peak(), 1.0);
}

TEST(Mixture, ResolvesRefsThroughTheManifest) {
  const auto dir = phr::testing::scratch_dir("mix_manifest");
  CorpusOptions o;
  o.clean_per_genre = 1;
  o.noise_files = 1;
  o.clean_seconds = 5.5;
  o.noise_seconds = 3.0;
  const Manifest m = write_synthetic_corpus(dir, o);
  const Manifest loaded = read_manifest(dir / "manifest.tsv");
  EXPECT_EQ(format_manifest(loaded), format_manifest(m));
  std::mt19937_64 rng(3);
  const MixtureRecipe r = sample_recipe(rng, loaded);
  const Mixture a = make_mixture(r, loaded);
  EXPECT_EQ(a.noisy.size(), 5u * 44100);
  MixtureRecipe bad = r;
  bad.clean_ref = "clean/missing.wav";
  EXPECT_THROW(make_mixture(bad, loaded), FormatError);
  bad = r;
  bad.clean_ref = r.noise_ref;
  EXPECT_THROW(make_mixture(bad, loaded), FormatError);
}

TEST(SampleRecipe, UniformInDbOverTheSupports) {
  const Manifest m = sample_manifest();
  std::mt19937_64 rng(2024);
  double snr_sum = 0.0, level_sum = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const MixtureRecipe r = sample_recipe(rng, m);
    ASSERT_GE(r.snr_db, kSnrMinDb);
    ASSERT_LE(r.snr_db, kSnrMaxDb);
    ASSERT_GE(r.level_db, kLevelMinDb);
    ASSERT_LE(r.level_db, kLevelMaxDb);
    ASSERT_EQ(r.clean_ref, "clean/piano_0.wav");
    ASSERT_EQ(r.noise_ref, "noise/78rpm side A.wav");
    snr_sum += r.snr_db;
    level_sum += r.level_db;
  }
  EXPECT_NEAR(snr_sum / 10000, 11.0, 0.5);
  EXPECT_NEAR(level_sum / 10000, -1.0, 0.3);
}

TEST(SampleRecipe, SeedFixesTheSequence) {
  const Manifest m = sample_manifest();
  std::mt19937_64 a(9), b(9);
  for (int k = 0; k < 20; ++k) EXPECT_EQ(sample_recipe(a, m), sample_recipe(b, m));
  EXPECT_THROW(sample_recipe(a, Manifest{}), std::invalid_argument);
}

TEST(Recipes, RoundTripIsExact) {
  const Manifest m = sample_manifest();
  std::mt19937_64 rng(1);
  RecipeList list{"corpus/manifest.tsv", {}};
  for (int k = 0; k < 100; ++k) list.recipes.push_back(sample_recipe(rng, m));
  const std::string text = format_recipes(list);
  const RecipeList back = parse_recipes(text);
  EXPECT_EQ(back.manifest, list.manifest);
  EXPECT_EQ(back.recipes, list.recipes);
  EXPECT_EQ(format_recipes(back), text);
  EXPECT_THROW(parse_recipes("a\tb\t1\t2\n"), FormatError);
  EXPECT_THROW(parse_recipes("a\tb\tx\t2\t3\n"), FormatError);
  EXPECT_THROW(parse_recipes("a\tb\t1\t2\t-3\n"), FormatError);
}

TEST(Synthetic, MusicIsDeterministicAtTheRequestedLevel) {
  for (Subgenre g : kAllSubgenres) {
    const auto a = synth_music(g, 3.0, 7), b = synth_music(g, 3.0, 7);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NEAR(a.rms(), 0.1, 1e-12);
    EXPECT_TRUE(a.all_finite());
    EXPECT_NE(synth_music(g, 3.0, 8).samples, a.samples);
  }
}

TEST(Synthetic, SurfaceNoiseIsImpulsive) {
  const auto n = synth_surface_noise(4.0, 3);
  EXPECT_EQ(n.size(), 4u * 44100);
  EXPECT_GT(n.peak() / n.rms(), 8.0);
}
