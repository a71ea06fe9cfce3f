#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

#include "phr/data/manifest.hpp"
#include "phr/data/mixture.hpp"
#include "phr/dsp/audio.hpp"
#include "phr/dsp/stft.hpp"
#include "phr/model/network.hpp"
#include "phr/numerics/adam.hpp"

namespace phr::model {

struct TrainConfig {
  std::vector<std::size_t> channels{32, 64, 128, 256};
  std::uint64_t steps = 300000;
  std::size_t batch = 8;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  std::uint64_t checkpoint_every = 10000;
  // Length of each training mixture.
  double example_seconds = 5.0;
  std::uint64_t lr_decay_every = 100000;

  // Throws std::invalid_argument on impossible values.
  void validate() const;
};

// Keys: channels (comma list), steps, batch, lr, seed, checkpoint_every,
// example_seconds, lr_decay_every. Unknown keys are a FormatError.
TrainConfig parse_train_config(std::string_view text);
TrainConfig read_train_config(const std::filesystem::path& path);

struct Example {
  dsp::AudioBuffer noisy;
  dsp::AudioBuffer target;
  data::MixtureRecipe recipe;
};

// Example `index` of the batch for optimizer step `step`. Must be a pure
// function of its arguments for training to be reproducible.
using ExampleSource = std::function<Example(std::uint64_t step, std::size_t index)>;

// Draws a recipe per (seed, step, index) from the manifest and mixes it.
// Decoded audio is cached.
ExampleSource manifest_source(data::Manifest manifest, std::uint64_t seed, double seconds);

// The same example at every step.
ExampleSource fixed_source(Example example);

class Trainer {
 public:
  // Starts from a fresh He-uniform model seeded by config.seed.
  Trainer(TrainConfig config, ExampleSource source);

  // Continues from a checkpoint written by save(): parameters, Adam moments
  // and the step counter.
  void resume(const std::filesystem::path& checkpoint);

  // One optimizer step over a batch; returns the mean two-stage loss of the
  // batch before the update. Throws NumericalError on a non-finite loss,
  // after writing the batch's recipes to `dump_path` if one is set.
  double step();

  // Runs until config.steps, appending "step\tloss\tlr" lines to
  // out_dir/train.log, writing out_dir/ckpt_<step>.phr every
  // checkpoint_every steps and out_dir/final.phr at the end.
  void run(const std::filesystem::path& out_dir);

  void save(const std::filesystem::path& path) const;

  std::uint64_t completed_steps() const { return adam_.step; }
  double current_lr() const { return adam_.config.lr_at(adam_.step); }
  const TwoStageModel& model() const { return model_; }
  const TrainConfig& config() const { return config_; }

  void set_dump_path(std::filesystem::path path) { dump_path_ = std::move(path); }

 private:
  TrainConfig config_;
  ExampleSource source_;
  TwoStageModel model_;
  nn::AdamState<float> adam_;
  dsp::StftConfig stft_;
  std::filesystem::path dump_path_;
};

}  // namespace phr::model
