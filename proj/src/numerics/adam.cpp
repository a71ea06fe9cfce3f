#include "phr/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace phr::nn {

double AdamConfig::lr_at(std::uint64_t step) const {
  const std::uint64_t drops = decay_every == 0 ? 0 : step / decay_every;
  return base_lr / std::pow(decay_factor, static_cast<double>(drops));
}

template <typename T>
void AdamState<T>::reset(std::span<const Tensor<T>> params) {
  step = 0;
  first_moment.clear();
  second_moment.clear();
  for (const auto& p : params) {
    first_moment.emplace_back(p.numel(), T(0));
    second_moment.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: grads/params count");
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  const AdamConfig& c = state.config;
  const double lr = c.lr_at(state.step);
  const double t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].mutable_values();
    const auto g = grads[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (g.size() != theta.size() || m.size() != theta.size()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " + std::to_string(k));
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / correction1) / (std::sqrt(vi / correction2) + c.epsilon);
      theta[i] = static_cast<T>(theta[i] - update);
    }
  }
  ++state.step;
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  std::vector<std::vector<T>> zeros;
  std::vector<std::span<const T>> grads;
  grads.reserve(params.size());
  zeros.reserve(params.size());
  for (auto& p : params) {
    if (p.has_grad()) {
      grads.push_back(p.grad());
    } else {
      zeros.emplace_back(p.numel(), T(0));
      grads.push_back(zeros.back());
    }
  }
  adam_step(params, std::span<const std::span<const T>>(grads), state);
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::span<Tensor<float>>, std::span<const std::span<const float>>,
                        AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, std::span<const std::span<const double>>,
                        AdamState<double>&);
template void adam_step(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace phr::nn
