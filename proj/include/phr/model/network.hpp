#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phr/numerics/ops.hpp"
#include "phr/numerics/tensor.hpp"

namespace phr::model {

using Tensor = nn::Tensor<float>;

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Owns every trainable tensor of a network in registration order. Layers
// keep handles that share storage with the entries here.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_state_(seed) {}

  Tensor add(std::string name, nn::Shape dims);
  // Uniform in [-bound, bound], drawn in registration order.
  void init_uniform(Tensor& t, double bound);
  const Tensor& get(const std::string& name) const;
  std::vector<NamedParam>& entries() { return params_; }
  const std::vector<NamedParam>& entries() const { return params_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;

 private:
  std::vector<NamedParam> params_;
  std::uint64_t rng_state_;
};

struct ConvLayer {
  Tensor weight;  // [out, in, k, k], or [in, out, k, k] when transposed
  Tensor bias;
  nn::Conv2dOptions options;
  bool transposed = false;

  Tensor operator()(const Tensor& x) const;
  std::size_t fan_in() const;
};

ConvLayer make_conv(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                    std::size_t kernel, nn::Conv2dOptions options);
ConvLayer make_transposed_conv(ParamStore& store, const std::string& name, std::size_t in,
                               std::size_t out);

struct IBlockConfig {
  std::size_t channels = 0;
  std::size_t dense_layers = 3;
};

// Dense stack: layer i maps channels * (i + 1) inputs to `channels` outputs
// through a 3x3 conv + ELU; a 1x1 conv projects the full concatenation back
// to `channels`, and the block input is added on top.
struct IBlock {
  IBlockConfig config;
  std::vector<ConvLayer> dense;
  ConvLayer project;
};

IBlock make_iblock(ParamStore& store, const std::string& name, const IBlockConfig& config);
Tensor iblock_forward(const Tensor& x, const IBlock& block);

struct UNetConfig {
  std::vector<std::size_t> channels{32, 64, 128, 256};
  void validate() const;
};

// Encoder scale s: I-Block(c_s), then a 4x4/2 conv + ELU to c_{s+1} (c_3 at
// the last scale). Decoder scale s: transposed 4x4/2 conv + ELU to c_s,
// concat with the encoder output, 1x1 conv back to c_s, I-Block(c_s).
struct UNet {
  UNetConfig config;
  std::vector<IBlock> encoder;
  std::vector<ConvLayer> down;
  IBlock bottleneck;
  std::vector<ConvLayer> up;
  std::vector<ConvLayer> fuse;
  std::vector<IBlock> decoder;
};

UNet make_unet(ParamStore& store, const std::string& name, const UNetConfig& config);
// f_in is [c_0, H, W] with H and W divisible by 16.
Tensor unet_forward(const Tensor& f_in, const UNet& net);

struct Sam {
  ConvLayer head;     // 3x3, c_0 -> 2: residual noise estimate
  ConvLayer mask;     // 1x1, 2 -> c_0
  ConvLayer feature;  // 1x1, c_0 -> c_0
};

struct SamOutputs {
  Tensor y1;
  Tensor f_sam;
  Tensor mask;
  Tensor noise;
};

Sam make_sam(ParamStore& store, const std::string& name, std::size_t channels);
SamOutputs sam_forward(const Tensor& f_out1, const Tensor& x, const Sam& sam);

struct ModelConfig {
  std::vector<std::size_t> channels{32, 64, 128, 256};
  std::size_t embedding_channels = 10;

  std::size_t input_channels() const { return 2 + embedding_channels; }
  std::size_t stage2_input_channels() const { return input_channels() + channels.front(); }
  void validate() const;
};

struct StageOutputs {
  Tensor y1;
  Tensor y2;
  Tensor mask;
};

class TwoStageModel {
 public:
  // He-uniform init from `seed`; both output heads start at zero.
  explicit TwoStageModel(ModelConfig config = {}, std::uint64_t seed = 0);

  TwoStageModel(const TwoStageModel&) = delete;
  TwoStageModel& operator=(const TwoStageModel&) = delete;
  TwoStageModel(TwoStageModel&&) = default;
  TwoStageModel& operator=(TwoStageModel&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // x: [2, H, W] noisy planes; embeddings: [embedding_channels, H, W].
  StageOutputs forward(const Tensor& x, const Tensor& embeddings) const;

  void zero_grad();

  ConvLayer early1, early2;
  UNet unet1, unet2;
  Sam sam;
  ConvLayer head2;

 private:
  ModelConfig config_;
  ParamStore store_;
};

StageOutputs two_stage_forward(const TwoStageModel& model, const Tensor& x,
                               const Tensor& embeddings);

// (sum |y1 - y| + sum |y2 - y|) / K over both planes, K = H * W bins.
Tensor two_stage_loss(const Tensor& y1, const Tensor& y2, const Tensor& y);

}  // namespace phr::model
