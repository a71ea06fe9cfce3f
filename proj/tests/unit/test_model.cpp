#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "phr/common/error.hpp"
#include "phr/dsp/stft.hpp"
#include "phr/model/checkpoint.hpp"
#include "phr/model/denoise.hpp"
#include "phr/model/features.hpp"
#include "phr/model/network.hpp"
#include "phr/numerics/adam.hpp"
#include "test_util.hpp"

using namespace phr;
using namespace phr::model;

namespace {

const ModelConfig kTiny{{4, 8, 16, 32}, 10};

Tensor random_tensor(nn::Shape dims, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<float> v(nn::element_count(dims));
  for (auto& x : v) x = static_cast<float>(d(rng));
  return Tensor(std::move(dims), std::move(v));
}

void zero_all(ConvLayer& l) {
  for (auto* t : {&l.weight, &l.bias})
    for (float& v : t->mutable_values()) v = 0.0f;
}

bool equal(const Tensor& a, const Tensor& b) {
  return a.dims() == b.dims() && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST(IBlock, ZeroWeightsPassInputThrough) {
  ParamStore store(1);
  IBlock b = make_iblock(store, "b", {6, 3});
  for (auto& l : b.dense) zero_all(l);
  zero_all(b.project);
  const Tensor x = random_tensor({6, 8, 5}, 2);
  EXPECT_TRUE(equal(iblock_forward(x, b), x));
}

TEST(IBlock, ShapeAndDenseWiring) {
  for (std::size_t c : {1, 3, 8}) {
    ParamStore store(c);
    const IBlock b = make_iblock(store, "b", {c, 3});
    ASSERT_EQ(b.dense.size(), 3u);
    // Layer i sees the block input plus i earlier outputs of width c.
    EXPECT_EQ(b.dense[0].weight.dim(1), c);
    EXPECT_EQ(b.dense[1].weight.dim(1), 2 * c);
    EXPECT_EQ(b.dense[2].weight.dim(1), c + 2 * c);
    EXPECT_EQ(b.project.weight.dim(1), 4 * c);
    const Tensor x = random_tensor({c, 7, 3 + c}, 3);
    EXPECT_EQ(iblock_forward(x, b).dims(), x.dims());
  }
}

TEST(IBlock, RejectsWrongChannels) {
  ParamStore store;
  const IBlock b = make_iblock(store, "b", {4, 3});
  EXPECT_THROW(iblock_forward(random_tensor({5, 4, 4}, 1), b), std::invalid_argument);
}

TEST(UNet, ShapeWalk) {
  ParamStore store(3);
  const UNet u = make_unet(store, "u", {{4, 8, 16, 32}});
  const Tensor x = random_tensor({4, 64, 48}, 4);
  EXPECT_EQ(unet_forward(x, u).dims(), x.dims());
  EXPECT_THROW(unet_forward(random_tensor({4, 40, 48}, 4), u), std::invalid_argument);
}

TEST(UNet, SixteenBySixteenReachesOnePixel) {
  ParamStore store(3);
  const UNet u = make_unet(store, "u", {{2, 3, 4, 5}});
  Tensor x = random_tensor({2, 16, 16}, 5);
  Tensor t = x;
  for (std::size_t s = 0; s < 4; ++s) t = u.down[s](iblock_forward(t, u.encoder[s]));
  EXPECT_EQ(t.dims(), (nn::Shape{5, 1, 1}));
  EXPECT_EQ(unet_forward(x, u).dims(), x.dims());
}

TEST(UNet, DefaultWidthsOnFullGrid) {
  nn::NoGradGuard no_grad;
  ParamStore store(9);
  const UNet u = make_unet(store, "u", {});
  const Tensor x = random_tensor({32, 1040, 432}, 6, 0.1);
  const Tensor y = unet_forward(x, u);
  EXPECT_EQ(y.dims(), (nn::Shape{32, 1040, 432}));
  EXPECT_TRUE(nn::all_finite(y));
}

TEST(UNet, ConfigValidation) {
  EXPECT_THROW(UNetConfig({4, 8, 16}).validate(), std::invalid_argument);
  EXPECT_THROW(UNetConfig({4, 8, 8, 16}).validate(), std::invalid_argument);
  EXPECT_NO_THROW(UNetConfig({}).validate());
}

TEST(UNet, GradientsReachEveryEncoderParameter) {
  ParamStore store(11);
  const UNet u = make_unet(store, "u", {{2, 4, 6, 8}});
  const Tensor x = random_tensor({2, 32, 16}, 7);
  nn::sum(nn::abs(unet_forward(x, u))).backward();
  for (const auto& p : store.entries()) {
    if (p.name.find("/enc") == std::string::npos) continue;
    ASSERT_TRUE(p.tensor.has_grad()) << p.name;
    float m = 0.0f;
    for (float g : p.tensor.grad()) m = std::max(m, std::abs(g));
    EXPECT_GT(m, 0.0f) << p.name;
  }
}

TEST(Sam, ZeroWeightsGiveIdentityAndHalfMask) {
  ParamStore store(2);
  Sam sam = make_sam(store, "sam", 4);
  zero_all(sam.head);
  zero_all(sam.mask);
  zero_all(sam.feature);
  const Tensor f = random_tensor({4, 8, 8}, 1), x = random_tensor({2, 8, 8}, 2);
  const SamOutputs out = sam_forward(f, x, sam);
  EXPECT_TRUE(equal(out.y1, x));
  for (float m : out.mask.values()) EXPECT_EQ(m, 0.5f);
  EXPECT_TRUE(equal(out.f_sam, f));
}

TEST(Sam, MaskStrictlyInsideUnitInterval) {
  ParamStore store(3);
  const Sam sam = make_sam(store, "sam", 3);
  const Tensor f = random_tensor({3, 8, 8}, 4, 5.0), x = random_tensor({2, 8, 8}, 5, 5.0);
  const SamOutputs out = sam_forward(f, x, sam);
  EXPECT_EQ(out.mask.dims(), f.dims());
  for (float m : out.mask.values()) {
    EXPECT_GT(m, 0.0f);
    EXPECT_LT(m, 1.0f);
  }
}

TEST(Sam, FeatureConvZeroLeavesFeatures) {
  ParamStore store(4);
  Sam sam = make_sam(store, "sam", 3);
  zero_all(sam.feature);
  const Tensor f = random_tensor({3, 8, 4}, 6), x = random_tensor({2, 8, 4}, 7);
  EXPECT_TRUE(equal(sam_forward(f, x, sam).f_sam, f));
}

TEST(Sam, RejectsSpatialMismatch) {
  ParamStore store;
  const Sam sam = make_sam(store, "sam", 3);
  EXPECT_THROW(sam_forward(random_tensor({3, 8, 8}, 1), random_tensor({2, 8, 4}, 2), sam),
               std::invalid_argument);
}

TEST(TwoStage, InputWidthsAndOutputShapes) {
  const TwoStageModel m(kTiny, 1);
  EXPECT_EQ(m.config().input_channels(), 12u);
  EXPECT_EQ(m.early1.weight.dim(1), 12u);
  EXPECT_EQ(m.early2.weight.dim(1), 12u + 4u);
  EXPECT_EQ(m.sam.head.weight.dim(0), 2u);
  EXPECT_EQ(m.head2.weight.dim(0), 2u);
  const Tensor x = random_tensor({2, 32, 16}, 3);
  const StageOutputs out = m.forward(x, embedding_grid(30, 32, 16));
  EXPECT_EQ(out.y1.dims(), x.dims());
  EXPECT_EQ(out.y2.dims(), x.dims());
}

TEST(TwoStage, StageOneIsIdentityAtInit) {
  const TwoStageModel m(kTiny, 7);
  const Tensor x = random_tensor({2, 48, 32}, 8, 3.0);
  const StageOutputs out = m.forward(x, embedding_grid(40, 48, 32));
  EXPECT_TRUE(equal(out.y1, x));
  for (float v : out.mask.values()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(TwoStage, InitIsDeterministicPerSeed) {
  const TwoStageModel a(kTiny, 5), b(kTiny, 5), c(kTiny, 6);
  const auto& pa = a.params().entries();
  const auto& pb = b.params().entries();
  const auto& pc = c.params().entries();
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(equal(pa[i].tensor, pb[i].tensor)) << pa[i].name;
    any_diff |= !equal(pa[i].tensor, pc[i].tensor);
  }
  EXPECT_TRUE(any_diff);
}

TEST(TwoStage, StageOneGradientsAfterOneStep) {
  TwoStageModel m(kTiny, 3);
  const Tensor emb = embedding_grid(32, 32, 16);
  const Tensor x = random_tensor({2, 32, 16}, 1), y = random_tensor({2, 32, 16}, 2);
  auto params = m.params().tensors();
  nn::AdamState<float> adam;
  adam.reset(params);
  for (int step = 0; step < 2; ++step) {
    m.zero_grad();
    const StageOutputs out = m.forward(x, emb);
    two_stage_loss(out.y1, out.y2, y).backward();
    if (step == 0) nn::adam_step<float>(params, adam);
  }
  float min_max = std::numeric_limits<float>::infinity();
  for (const auto& p : m.params().entries()) {
    if (p.name.rfind("stage1/", 0) != 0) continue;
    float mx = 0.0f;
    for (float g : p.tensor.grad()) mx = std::max(mx, std::abs(g));
    EXPECT_GT(mx, 0.0f) << p.name;
    min_max = std::min(min_max, mx);
  }
  EXPECT_GT(min_max, 0.0f);
}

TEST(Loss, KnownValues) {
  const Tensor y({2, 1, 1}, {1.0f, 0.0f});
  const Tensor y1({2, 1, 1}, {0.0f, 0.0f});
  const Tensor y2({2, 1, 1}, {1.0f, 1.0f});
  EXPECT_FLOAT_EQ(two_stage_loss(y1, y2, y).item(), 2.0f);
  EXPECT_EQ(two_stage_loss(y, y, y).item(), 0.0f);
}

TEST(Loss, DividesByBinCount) {
  const Tensor y = Tensor::zeros({2, 4, 5});
  const Tensor ones = Tensor::full({2, 4, 5}, 1.0f);
  // Each bin contributes |1| + |1| per stage.
  EXPECT_FLOAT_EQ(two_stage_loss(ones, ones, y).item(), 4.0f);
}

TEST(Loss, SymmetricInResidualSign) {
  const Tensor y = random_tensor({2, 6, 6}, 1), d = random_tensor({2, 6, 6}, 2);
  const Tensor plus = nn::add(y, d), minus = nn::sub(y, d);
  EXPECT_EQ(two_stage_loss(plus, plus, y).item(), two_stage_loss(minus, minus, y).item());
}

TEST(Loss, RejectsShapeMismatch) {
  EXPECT_THROW(two_stage_loss(Tensor::zeros({2, 2, 2}), Tensor::zeros({2, 2, 2}),
                              Tensor::zeros({2, 2, 3})),
               std::invalid_argument);
}

TEST(Features, PlanesRoundTrip) {
  const auto x = phr::testing::white_noise(44100, 1.0, 3);
  const auto spec = dsp::pad_to_grid(dsp::stft(x), 16);
  const Tensor t = planes_to_tensor(spec);
  EXPECT_EQ(t.dims(), (nn::Shape{2, std::size_t(spec.rows), std::size_t(spec.cols)}));
  // The planes go in unscaled.
  const auto v = t.values();
  const std::size_t n = spec.real.size();
  for (std::size_t i = 0; i < n; ++i) {
    ASSERT_EQ(v[i], static_cast<float>(spec.real[i]));
    ASSERT_EQ(v[n + i], static_cast<float>(spec.imag[i]));
  }
  dsp::PaddedSpectrogram back = spec;
  tensor_to_planes(t, back);
  for (std::size_t i = 0; i < spec.real.size(); ++i)
    ASSERT_NEAR(back.real[i], spec.real[i], 1e-6 * (1.0 + std::abs(spec.real[i])));
}

TEST(Features, EmbeddingGridMatchesPaddedEmbeddings) {
  const Tensor e = embedding_grid(1025, 1040, 4);
  const auto base = dsp::freq_pos_embeddings(1025, 10);
  EXPECT_EQ(e.dims(), (nn::Shape{10, 1040, 4}));
  const auto v = e.values();
  EXPECT_EQ(v[(1 * 1040 + 0) * 4 + 3], 1.0f);
  // Row 1025 mirrors row 1023.
  for (std::size_t c = 0; c < 10; ++c)
    EXPECT_EQ(v[(c * 1040 + 1025) * 4], static_cast<float>(base[c * 1025 + 1023]));
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = phr::testing::scratch_dir("ckpt");
};

TEST_F(CheckpointTest, ByteLayout) {
  const std::vector<StoredTensor> ts{{"ab", {2}, {1.0f, -2.0f}}};
  const std::string b = encode_checkpoint(ts);
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 2 + 2 + 1 + 4 + 1 + 8 + 4);
  EXPECT_EQ(b.substr(0, 4), "PHR1");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[12], 2);
  EXPECT_EQ(b.substr(14, 2), "ab");
  EXPECT_EQ(b[16], 1);
  EXPECT_EQ(b[17], 2);
  EXPECT_EQ(b[21], 0);
  // 1.0f little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[25]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(b[24]), 0x80);
}

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  TwoStageModel m(kTiny, 4);
  nn::AdamState<float> adam;
  adam.reset(m.params().tensors());
  adam.step = 1234;
  adam.first_moment[3][0] = 0.25f;
  const auto path = dir / "m.phr";
  save_model(path, m, &adam);
  const auto stored = read_checkpoint(path);
  const TwoStageModel r = restore_model(stored);
  ASSERT_EQ(r.config().channels, kTiny.channels);
  const auto& a = m.params().entries();
  const auto& b = r.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(equal(a[i].tensor, b[i].tensor)) << a[i].name;
  }
  nn::AdamState<float> back;
  restore_adam(stored, r, back);
  EXPECT_EQ(back.step, 1234u);
  EXPECT_EQ(back.first_moment, adam.first_moment);
  EXPECT_EQ(encode_checkpoint(snapshot(r, &back)), encode_checkpoint(stored));
}

TEST_F(CheckpointTest, DetectsCorruption) {
  TwoStageModel m(kTiny, 4);
  std::string bytes = encode_checkpoint(snapshot(m));
  std::string flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(flipped), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9)), FormatError);
  std::string magic = bytes;
  magic[3] = '2';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
  EXPECT_THROW(load_model(dir / "missing.phr"), FormatError);
  std::ofstream(dir / "junk.phr") << "hello";
  EXPECT_THROW(load_model(dir / "junk.phr"), FormatError);
}

TEST_F(CheckpointTest, RejectsShapeMismatch) {
  TwoStageModel m(kTiny, 4);
  auto s = snapshot(m);
  s[0].values = {4, 8, 16, 64};
  EXPECT_THROW(restore_model(s), FormatError);
}

TEST(Denoise, IdentityAtInit) {
  const TwoStageModel m(kTiny, 2);
  const auto x = phr::testing::white_noise(dsp::seconds_to_samples(6.0), 0.1, 5);
  const auto y = denoise_file(x, m);
  ASSERT_EQ(y.size(), x.size());
  EXPECT_GT(phr::testing::interior_snr_db(x, y, 2048), 60.0);
}

TEST(Denoise, OutputLengthMatchesInput) {
  const TwoStageModel m(kTiny, 2);
  for (double seconds : {1.0, 5.0, 17.3}) {
    const auto x = phr::testing::white_noise(dsp::seconds_to_samples(seconds), 0.1, 6);
    EXPECT_EQ(denoise_file(x, m).size(), x.size()) << seconds;
  }
  EXPECT_THROW(denoise_file(phr::testing::white_noise(1000, 0.1, 1), m), std::invalid_argument);
}

TEST(Denoise, CheckpointPathOverload) {
  const auto dir = phr::testing::scratch_dir("denoise_ckpt");
  const TwoStageModel m(kTiny, 2);
  save_model(dir / "m.phr", m);
  const auto x = phr::testing::white_noise(44100, 0.1, 7);
  const auto a = denoise_file(x, m);
  const auto b = denoise_file(x, dir / "m.phr");
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_THROW(denoise_file(x, dir / "nope.phr"), FormatError);
}
