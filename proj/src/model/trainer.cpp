#include "phr/model/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>

#include "phr/common/config.hpp"
#include "phr/common/error.hpp"
#include "phr/model/checkpoint.hpp"
#include "phr/model/features.hpp"
#include "phr/numerics/memory.hpp"
#include "phr/numerics/ops.hpp"

namespace phr::model {

void TrainConfig::validate() const {
  ModelConfig{channels}.validate();
  if (batch == 0) throw std::invalid_argument("batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(example_seconds > 0.0)) throw std::invalid_argument("example_seconds must be positive");
}

TrainConfig parse_train_config(std::string_view text) {
  const ConfigFile file = ConfigFile::parse(text);
  file.require_known({"channels", "steps", "batch", "lr", "seed", "checkpoint_every",
                      "example_seconds", "lr_decay_every"});
  TrainConfig c;
  if (auto v = file.get("channels")) c.channels = parse_size_list(*v, "channels");
  if (auto v = file.get("steps")) c.steps = parse_u64(*v, "steps");
  if (auto v = file.get("batch")) c.batch = parse_u64(*v, "batch");
  if (auto v = file.get("lr")) c.lr = parse_double(*v, "lr");
  if (auto v = file.get("seed")) c.seed = parse_u64(*v, "seed");
  if (auto v = file.get("checkpoint_every")) c.checkpoint_every = parse_u64(*v, "checkpoint_every");
  if (auto v = file.get("example_seconds")) c.example_seconds = parse_double(*v, "example_seconds");
  if (auto v = file.get("lr_decay_every")) c.lr_decay_every = parse_u64(*v, "lr_decay_every");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  return c;
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_train_config(text);
}

ExampleSource manifest_source(data::Manifest manifest, std::uint64_t seed, double seconds) {
  struct State {
    data::Manifest manifest;
    std::mutex mutex;
    std::map<std::string, dsp::AudioBuffer> audio;

    const dsp::AudioBuffer& load(const std::string& ref) {
      std::lock_guard lock(mutex);
      auto it = audio.find(ref);
      if (it == audio.end()) {
        it = audio.emplace(ref, data::load_entry(manifest, manifest.find(ref))).first;
      }
      return it->second;
    }
  };
  auto state = std::make_shared<State>();
  state->manifest = std::move(manifest);
  return [state, seed, seconds](std::uint64_t step, std::size_t index) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(step), hi(step), lo(index), hi(index)};
    std::mt19937_64 rng(seq);
    const data::MixtureRecipe recipe = data::sample_recipe(rng, state->manifest);
    data::MixOptions opts;
    opts.seconds = seconds;
    data::Mixture m = data::make_mixture(recipe, state->load(recipe.clean_ref),
                                         state->load(recipe.noise_ref), opts);
    return Example{std::move(m.noisy), std::move(m.target), recipe};
  };
}

ExampleSource fixed_source(Example example) {
  auto shared = std::make_shared<const Example>(std::move(example));
  return [shared](std::uint64_t, std::size_t) { return *shared; };
}

Trainer::Trainer(TrainConfig config, ExampleSource source)
    : config_(std::move(config)),
      source_(std::move(source)),
      model_(ModelConfig{config_.channels}, config_.seed) {
  config_.validate();
  nn::tune_allocator();
  adam_.config.base_lr = config_.lr;
  adam_.config.decay_every = config_.lr_decay_every;
  const auto params = model_.params().tensors();
  adam_.reset(params);
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const auto tensors = read_checkpoint(checkpoint);
  TwoStageModel restored = restore_model(tensors);
  if (restored.config().channels != config_.channels) {
    throw FormatError(checkpoint.string() + ": channel ladder does not match the train config");
  }
  model_ = std::move(restored);
  restore_adam(tensors, model_, adam_);
}

double Trainer::step() {
  model_.zero_grad();
  std::vector<data::MixtureRecipe> recipes;
  double total = 0.0;
  const float inv_batch = 1.0f / static_cast<float>(config_.batch);
  for (std::size_t b = 0; b < config_.batch; ++b) {
    const Example ex = source_(adam_.step, b);
    recipes.push_back(ex.recipe);
    const dsp::PaddedAnalysis noisy = dsp::stft_full(ex.noisy, stft_);
    const dsp::PaddedAnalysis target = dsp::stft_full(ex.target, stft_);
    const dsp::PaddedSpectrogram x_grid = dsp::pad_to_grid(noisy.spec, 16);
    const dsp::PaddedSpectrogram y_grid = dsp::pad_to_grid(target.spec, 16);
    const Tensor x = planes_to_tensor(x_grid);
    const Tensor y = planes_to_tensor(y_grid);
    const Tensor emb = embedding_grid(noisy.spec.bins, x_grid.rows, x_grid.cols,
                                      model_.config().embedding_channels);
    const StageOutputs out = model_.forward(x, emb);
    const Tensor loss = two_stage_loss(out.y1, out.y2, y);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      if (!dump_path_.empty()) data::write_recipes(dump_path_, data::RecipeList{"", recipes});
      throw NumericalError("non-finite loss at step " + std::to_string(adam_.step + 1) +
                           (dump_path_.empty() ? "" : "; batch recipes in " + dump_path_.string()));
    }
    total += value;
    nn::scale(loss, inv_batch).backward();
  }
  auto params = model_.params().tensors();
  nn::adam_step(std::span<Tensor>(params), adam_);
  return total / static_cast<double>(config_.batch);
}

void Trainer::save(const std::filesystem::path& path) const { save_model(path, model_, &adam_); }

void Trainer::run(const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (dump_path_.empty()) dump_path_ = out_dir / "nonfinite_batch.tsv";
  std::ofstream log(out_dir / "train.log", std::ios::app);
  if (!log) throw FormatError("cannot write " + (out_dir / "train.log").string());
  char line[96];
  while (adam_.step < config_.steps) {
    const double lr = current_lr();
    const double loss = step();
    std::snprintf(line, sizeof line, "%llu\t%.9g\t%.6g\n",
                  static_cast<unsigned long long>(adam_.step), loss, lr);
    log << line << std::flush;
    if (config_.checkpoint_every != 0 && adam_.step % config_.checkpoint_every == 0) {
      save(out_dir / ("ckpt_" + std::to_string(adam_.step) + ".phr"));
    }
  }
  save(out_dir / "final.phr");
}

}  // namespace phr::model
