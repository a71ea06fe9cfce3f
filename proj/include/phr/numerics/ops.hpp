#pragma once

#include <cstddef>
#include <span>

#include "phr/numerics/tensor.hpp"

namespace phr::nn {

struct Conv2dOptions {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

// The 4x4 / stride 2 / pad 1 setting that halves (conv2d) or doubles
// (conv_transpose2d) both spatial extents.
inline constexpr Conv2dOptions kResample{2, 2, 1, 1};

// input [C_in, H, W], weight [C_out, C_in, kH, kW], bias [C_out] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions options = {});

// input [C_in, H, W], weight [C_in, C_out, kH, kW], bias [C_out] or undefined.
// Output extents are (H - 1) * stride - 2 * pad + k. This is the adjoint of
// conv2d with the same weight tensor.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, Conv2dOptions options = kResample);

// Exponential linear unit with alpha = 1; the derivative at 0 is taken as 1.
template <typename T>
Tensor<T> elu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// Elementwise |x|; the subgradient at 0 is 0.
template <typename T>
Tensor<T> abs(const Tensor<T>& x);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// sum |a - b|
template <typename T>
Tensor<T> l1_sum(const Tensor<T>& a, const Tensor<T>& b);
// mean |a - b|
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
bool all_finite(const Tensor<T>& x);

}  // namespace phr::nn
