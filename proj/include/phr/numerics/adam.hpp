#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "phr/numerics/tensor.hpp"

namespace phr::nn {

// Step-decayed learning rate: base_lr / decay_factor^floor(step / decay_every).
struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
  double base_lr = 1e-4;
  std::uint64_t decay_every = 100000;
  double decay_factor = 10.0;

  double lr_at(std::uint64_t step) const;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;  // completed updates
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  // Zero moments shaped like `params`.
  void reset(std::span<const Tensor<T>> params);
};

// One bias-corrected Adam update of every parameter from explicit gradients.
// The learning rate is config.lr_at(state.step) before the increment.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state);

// Same, reading each parameter's accumulated grad (missing grads count as 0).
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

}  // namespace phr::nn
