#include "phr/numerics/kernels.hpp"

#include <cstddef>

namespace phr::nn::kernels::reference {
namespace {

// Input coordinate hit by output index `o` and kernel tap `k`, or -1.
inline std::ptrdiff_t source(std::size_t o, std::size_t k, std::size_t stride, std::size_t pad,
                             std::size_t extent) {
  const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o * stride + k) -
                           static_cast<std::ptrdiff_t>(pad);
  return (i >= 0 && i < static_cast<std::ptrdiff_t>(extent)) ? i : -1;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output) {
  for (std::size_t co = 0; co < g.out_c; ++co) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T acc = bias ? bias[co] : T(0);
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const std::ptrdiff_t iy = source(oy, ky, g.stride_h, g.pad_h, g.in_h);
            if (iy < 0) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const std::ptrdiff_t ix = source(ox, kx, g.stride_w, g.pad_w, g.in_w);
              if (ix < 0) continue;
              acc += weight[((co * g.in_c + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                     input[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                           static_cast<std::size_t>(ix)];
            }
          }
        }
        output[(co * g.out_h + oy) * g.out_w + ox] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_output, const T* weight,
                           T* grad_input) {
  for (std::size_t co = 0; co < g.out_c; ++co) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T go = grad_output[(co * g.out_h + oy) * g.out_w + ox];
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const std::ptrdiff_t iy = source(oy, ky, g.stride_h, g.pad_h, g.in_h);
            if (iy < 0) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const std::ptrdiff_t ix = source(ox, kx, g.stride_w, g.pad_w, g.in_w);
              if (ix < 0) continue;
              grad_input[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                         static_cast<std::size_t>(ix)] +=
                  go * weight[((co * g.in_c + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_output, const T* input,
                            T* grad_weight, T* grad_bias) {
  for (std::size_t co = 0; co < g.out_c; ++co) {
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T go = grad_output[(co * g.out_h + oy) * g.out_w + ox];
        if (grad_bias) grad_bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
            const std::ptrdiff_t iy = source(oy, ky, g.stride_h, g.pad_h, g.in_h);
            if (iy < 0) continue;
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              const std::ptrdiff_t ix = source(ox, kx, g.stride_w, g.pad_w, g.in_w);
              if (ix < 0) continue;
              grad_weight[((co * g.in_c + ci) * g.kernel_h + ky) * g.kernel_w + kx] +=
                  go * input[(ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w +
                             static_cast<std::size_t>(ix)];
            }
          }
        }
      }
    }
  }
}

#define PHR_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);

PHR_INSTANTIATE(float)
PHR_INSTANTIATE(double)
#undef PHR_INSTANTIATE

}  // namespace phr::nn::kernels::reference
