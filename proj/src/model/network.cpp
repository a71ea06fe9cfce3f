#include "phr/model/network.hpp"

#include <cmath>
#include <stdexcept>

namespace phr::model {

Tensor ParamStore::add(std::string name, nn::Shape dims) {
  for (const auto& p : params_)
    if (p.name == name) throw std::logic_error("duplicate parameter " + name);
  Tensor t = Tensor::zeros(std::move(dims), true);
  params_.push_back({std::move(name), t});
  return t;
}

void ParamStore::init_uniform(Tensor& t, double bound) {
  // splitmix64 keeps the draws identical across standard libraries.
  for (float& v : t.mutable_values()) {
    std::uint64_t z = (rng_state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
    v = static_cast<float>((2.0 * u - 1.0) * bound);
  }
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw std::out_of_range("no parameter " + name);
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

Tensor ConvLayer::operator()(const Tensor& x) const {
  return transposed ? nn::conv_transpose2d(x, weight, bias, options)
                    : nn::conv2d(x, weight, bias, options);
}

std::size_t ConvLayer::fan_in() const {
  const auto& d = weight.dims();
  if (transposed) return d[0] * d[2] * d[3] / (options.stride_h * options.stride_w);
  return d[1] * d[2] * d[3];
}

namespace {

void he_uniform(ParamStore& store, ConvLayer& layer) {
  store.init_uniform(layer.weight, std::sqrt(6.0 / static_cast<double>(layer.fan_in())));
}

Tensor elu_conv(const ConvLayer& layer, const Tensor& x) { return nn::elu(layer(x)); }

Tensor cat(std::initializer_list<Tensor> parts) {
  return nn::concat<float>(std::span<const Tensor>(parts.begin(), parts.size()), 0);
}

constexpr nn::Conv2dOptions kSame3{1, 1, 1, 1};
constexpr nn::Conv2dOptions kPointwise{1, 1, 0, 0};

}  // namespace

ConvLayer make_conv(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                    std::size_t kernel, nn::Conv2dOptions options) {
  ConvLayer l;
  l.weight = store.add(name + "/w", {out, in, kernel, kernel});
  l.bias = store.add(name + "/b", {out});
  l.options = options;
  he_uniform(store, l);
  return l;
}

ConvLayer make_transposed_conv(ParamStore& store, const std::string& name, std::size_t in,
                               std::size_t out) {
  ConvLayer l;
  l.weight = store.add(name + "/w", {in, out, 4, 4});
  l.bias = store.add(name + "/b", {out});
  l.options = nn::kResample;
  l.transposed = true;
  he_uniform(store, l);
  return l;
}

IBlock make_iblock(ParamStore& store, const std::string& name, const IBlockConfig& config) {
  if (config.channels == 0 || config.dense_layers == 0)
    throw std::invalid_argument("I-Block needs channels and layers");
  IBlock b;
  b.config = config;
  const std::size_t c = config.channels;
  for (std::size_t i = 0; i < config.dense_layers; ++i)
    b.dense.push_back(make_conv(store, name + "/dense" + std::to_string(i), c * (i + 1), c, 3, kSame3));
  b.project = make_conv(store, name + "/project", c * (config.dense_layers + 1), c, 1, kPointwise);
  return b;
}

Tensor iblock_forward(const Tensor& x, const IBlock& block) {
  if (x.rank() != 3 || x.dim(0) != block.config.channels)
    throw std::invalid_argument("I-Block expects " + std::to_string(block.config.channels) +
                                " channels, got " + nn::to_string(x.dims()));
  std::vector<Tensor> features{x};
  for (const auto& layer : block.dense) {
    const Tensor in = features.size() == 1 ? x : nn::concat<float>(features, 0);
    features.push_back(elu_conv(layer, in));
  }
  return nn::add(x, block.project(nn::concat<float>(features, 0)));
}

void UNetConfig::validate() const {
  if (channels.size() != 4) throw std::invalid_argument("U-Net needs exactly 4 scales");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0) throw std::invalid_argument("U-Net channel count must be positive");
    if (i > 0 && channels[i] <= channels[i - 1])
      throw std::invalid_argument("U-Net channels must be strictly increasing");
  }
}

UNet make_unet(ParamStore& store, const std::string& name, const UNetConfig& config) {
  config.validate();
  UNet u;
  u.config = config;
  const auto& c = config.channels;
  const std::size_t scales = c.size();
  for (std::size_t s = 0; s < scales; ++s) {
    const std::string p = name + "/enc" + std::to_string(s);
    u.encoder.push_back(make_iblock(store, p, {c[s], 3}));
    const std::size_t next = s + 1 < scales ? c[s + 1] : c[s];
    u.down.push_back(make_conv(store, p + "/down", c[s], next, 4, nn::kResample));
  }
  u.bottleneck = make_iblock(store, name + "/bottleneck", {c.back(), 3});
  for (std::size_t k = 0; k < scales; ++k) {
    const std::size_t s = scales - 1 - k;
    const std::string p = name + "/dec" + std::to_string(s);
    const std::size_t below = s + 1 < scales ? c[s + 1] : c[s];
    u.up.push_back(make_transposed_conv(store, p + "/up", below, c[s]));
    u.fuse.push_back(make_conv(store, p + "/fuse", 2 * c[s], c[s], 1, kPointwise));
    u.decoder.push_back(make_iblock(store, p, {c[s], 3}));
  }
  return u;
}

Tensor unet_forward(const Tensor& f_in, const UNet& net) {
  const std::size_t scales = net.encoder.size();
  const std::size_t grid = std::size_t{1} << scales;
  if (f_in.rank() != 3 || f_in.dim(1) % grid != 0 || f_in.dim(2) % grid != 0)
    throw std::invalid_argument("U-Net input " + nn::to_string(f_in.dims()) +
                                " must have spatial extents divisible by " + std::to_string(grid));
  std::vector<Tensor> skips;
  Tensor x = f_in;
  for (std::size_t s = 0; s < scales; ++s) {
    skips.push_back(iblock_forward(x, net.encoder[s]));
    x = elu_conv(net.down[s], skips.back());
  }
  x = iblock_forward(x, net.bottleneck);
  for (std::size_t k = 0; k < scales; ++k) {
    const std::size_t s = scales - 1 - k;
    x = elu_conv(net.up[k], x);
    x = net.fuse[k](cat({x, skips[s]}));
    x = iblock_forward(x, net.decoder[k]);
  }
  return x;
}

Sam make_sam(ParamStore& store, const std::string& name, std::size_t channels) {
  Sam s;
  s.head = make_conv(store, name + "/head", channels, 2, 3, kSame3);
  s.mask = make_conv(store, name + "/mask", 2, channels, 1, kPointwise);
  s.feature = make_conv(store, name + "/feature", channels, channels, 1, kPointwise);
  return s;
}

SamOutputs sam_forward(const Tensor& f_out1, const Tensor& x, const Sam& sam) {
  if (f_out1.rank() != 3 || x.rank() != 3 || f_out1.dim(1) != x.dim(1) || f_out1.dim(2) != x.dim(2))
    throw std::invalid_argument("SAM: feature " + nn::to_string(f_out1.dims()) +
                                " and input " + nn::to_string(x.dims()) + " disagree");
  SamOutputs out;
  out.noise = sam.head(f_out1);
  out.y1 = nn::add(x, out.noise);
  out.mask = nn::sigmoid(sam.mask(out.y1));
  out.f_sam = nn::add(f_out1, nn::mul(sam.feature(f_out1), out.mask));
  return out;
}

void ModelConfig::validate() const {
  UNetConfig{channels}.validate();
  if (embedding_channels % 2 != 0) throw std::invalid_argument("embedding channels must be even");
}

TwoStageModel::TwoStageModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), store_(seed) {
  config_.validate();
  const std::size_t c0 = config_.channels.front();
  const UNetConfig ucfg{config_.channels};
  early1 = make_conv(store_, "stage1/early", config_.input_channels(), c0, 3, kSame3);
  unet1 = make_unet(store_, "stage1/unet", ucfg);
  sam = make_sam(store_, "stage1/sam", c0);
  early2 = make_conv(store_, "stage2/early", config_.stage2_input_channels(), c0, 3, kSame3);
  unet2 = make_unet(store_, "stage2/unet", ucfg);
  head2 = make_conv(store_, "stage2/head", c0, 2, 3, kSame3);
  for (Tensor* t : {&sam.head.weight, &head2.weight})
    for (float& v : t->mutable_values()) v = 0.0f;
}

StageOutputs TwoStageModel::forward(const Tensor& x, const Tensor& embeddings) const {
  if (x.rank() != 3 || x.dim(0) != 2)
    throw std::invalid_argument("model input must be [2, H, W], got " + nn::to_string(x.dims()));
  if (embeddings.rank() != 3 || embeddings.dim(0) != config_.embedding_channels ||
      embeddings.dim(1) != x.dim(1) || embeddings.dim(2) != x.dim(2))
    throw std::invalid_argument("embedding grid " + nn::to_string(embeddings.dims()) +
                                " does not match input " + nn::to_string(x.dims()));
  const Tensor f_in1 = elu_conv(early1, cat({x, embeddings}));
  const SamOutputs s = sam_forward(unet_forward(f_in1, unet1), x, sam);
  const Tensor f_in2 = elu_conv(early2, cat({x, embeddings, s.f_sam}));
  const Tensor f_out2 = unet_forward(f_in2, unet2);
  return {s.y1, nn::add(x, head2(f_out2)), s.mask};
}

void TwoStageModel::zero_grad() {
  for (auto& p : store_.entries()) p.tensor.zero_grad();
}

StageOutputs two_stage_forward(const TwoStageModel& model, const Tensor& x,
                               const Tensor& embeddings) {
  return model.forward(x, embeddings);
}

Tensor two_stage_loss(const Tensor& y1, const Tensor& y2, const Tensor& y) {
  if (y1.dims() != y.dims() || y2.dims() != y.dims())
    throw std::invalid_argument("loss operands disagree in shape");
  if (y.rank() != 3) throw std::invalid_argument("loss expects [C, H, W] planes");
  const float k = static_cast<float>(y.dim(1) * y.dim(2));
  return nn::scale(nn::add(nn::l1_sum(y1, y), nn::l1_sum(y2, y)), 1.0f / k);
}

}  // namespace phr::model
