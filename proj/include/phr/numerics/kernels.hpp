#pragma once

#include <cstddef>

namespace phr::nn::kernels {

// Shape bookkeeping for a 2-D cross-correlation over one [C, H, W] image.
// Weights are [out_c, in_c, kernel_h, kernel_w]; padding is zero padding.
struct ConvGeometry {
  std::size_t in_c = 0, in_h = 0, in_w = 0;
  std::size_t out_c = 0, out_h = 0, out_w = 0;
  std::size_t kernel_h = 0, kernel_w = 0;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  std::size_t in_size() const { return in_c * in_h * in_w; }
  std::size_t out_size() const { return out_c * out_h * out_w; }
  std::size_t weight_size() const { return out_c * in_c * kernel_h * kernel_w; }
};

// Fills out_h/out_w from the input extents; throws std::invalid_argument if
// the padded input is smaller than the kernel or a stride is zero.
ConvGeometry make_conv_geometry(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                                std::size_t out_c, std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t stride_h, std::size_t stride_w, std::size_t pad_h,
                                std::size_t pad_w);

// OpenMP-parallel kernels. Every output element is produced by exactly one
// thread in a fixed summation order, so results do not depend on the thread
// count. The backward kernels accumulate into their outputs.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output);

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_output, const T* weight,
                           T* grad_input);

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_output, const T* input,
                            T* grad_weight, T* grad_bias);

// Serial loop-nest implementations used as the test oracle and benchmark
// baseline. Same contracts as above.
namespace reference {

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output);

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_output, const T* weight,
                           T* grad_input);

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_output, const T* input,
                            T* grad_weight, T* grad_bias);

}  // namespace reference

}  // namespace phr::nn::kernels
