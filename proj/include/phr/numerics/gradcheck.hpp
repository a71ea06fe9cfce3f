#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "phr/numerics/tensor.hpp"

namespace phr::nn {

using DoubleFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

// Compares reverse-mode gradients of a fixed random projection of f against
// central finite differences. Returns ||analytic - numeric|| / max(||analytic||,
// ||numeric||) over all inputs, or 0 if both vanish.
double gradient_error(const DoubleFn& f, std::vector<Tensor<double>> inputs, double step,
                      std::uint64_t seed);

struct GradcheckOptions {
  std::size_t cases_per_op = 50;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

struct OpCheck {
  std::string op;
  std::size_t cases = 0;
  double worst_error = 0.0;
  std::string worst_case;
  double tolerance = 0.0;

  bool passed() const { return worst_error < tolerance; }
};

// Every differentiable op on random small shapes.
std::vector<OpCheck> run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace phr::nn
