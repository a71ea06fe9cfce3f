#include "phr/numerics/ops.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "phr/numerics/kernels.hpp"

namespace phr::nn {
namespace {

constexpr std::ptrdiff_t kParallelThreshold = 1 << 15;

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
Tensor<T> make_result(Shape dims, std::vector<T> values, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(NodeT<T>&)> backward) {
  auto node = std::make_shared<NodeT<T>>();
  node->dims = std::move(dims);
  node->value = std::move(values);
#ifndef NDEBUG
  for (T v : node->value) {
    if (!std::isfinite(v)) throw std::logic_error("non-finite value produced by a tensor op");
  }
#endif
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) needs_grad = needs_grad || (t.defined() && t.requires_grad());
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& t : inputs) {
      if (t.defined()) node->parents.push_back(t.node());
    }
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.dims() != b.dims()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.dims()) +
                                " vs " + to_string(b.dims()));
  }
}

template <typename T>
T sign_of(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

// exp(v) and exp(v) - 1 for v <= 0. The float versions are branch-free so
// the activation loops vectorize; both stay within a few ulp of libm.
inline double expm1_nonpositive(double v) { return std::expm1(v); }
inline double exp_nonpositive(double v) { return std::exp(v); }

struct ExpParts {
  float scale;  // 2^n
  float p;      // exp(r) - 1 with |r| <= ln2 / 2
};

inline ExpParts exp_parts(float v) {
  v = std::max(v, -87.0f);
  // Round to nearest by adding and removing 1.5 * 2^23; std::floor does not vectorize.
  const float n = (v * 1.44269504f + 12582912.0f) - 12582912.0f;
  const float r = (v - n * 0.693359375f) + n * 2.12194440e-4f;
  const float p =
      r + r * r * (0.5f + r * (1.0f / 6 + r * (1.0f / 24 + r * (1.0f / 120 + r * (1.0f / 720 + r * (1.0f / 5040))))));
  return {std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23), p};
}

inline float expm1_nonpositive(float v) {
  const ExpParts e = exp_parts(v);
  return e.scale * e.p + (e.scale - 1.0f);
}

inline float exp_nonpositive(float v) {
  const ExpParts e = exp_parts(v);
  return e.scale * e.p + e.scale;
}

// Raw pointers throughout so these loops vectorize.
template <typename T, typename F>
void fill_from(std::vector<T>& out, F f) {
  T* __restrict o = out.data();
  const auto n = static_cast<std::ptrdiff_t>(out.size());
#pragma omp simd
  for (std::ptrdiff_t i = 0; i < n; ++i) o[i] = f(i);
}

template <typename T, typename F>
void accumulate(std::vector<T>& g, F f) {
  T* __restrict o = g.data();
  const auto n = static_cast<std::ptrdiff_t>(g.size());
#pragma omp simd
  for (std::ptrdiff_t i = 0; i < n; ++i) o[i] += f(i);
}

template <typename T, typename F>
Tensor<T> unary(const Tensor<T>& x, F forward, std::function<void(NodeT<T>&)> backward) {
  const T* in = x.values().data();
  std::vector<T> out(x.numel());
  fill_from(out, [in, forward](std::ptrdiff_t i) { return forward(in[i]); });
  return make_result<T>(x.dims(), std::move(out), {x}, std::move(backward));
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions o) {
  if (input.rank() != 3 || weight.rank() != 4) {
    throw std::invalid_argument("conv2d: expected input [C,H,W] and weight [O,C,kH,kW], got " +
                                to_string(input.dims()) + " and " + to_string(weight.dims()));
  }
  if (weight.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                                " input channels, input has " + std::to_string(input.dim(0)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw std::invalid_argument("conv2d: bias shape " + to_string(bias.dims()) +
                                " does not match " + std::to_string(weight.dim(0)) + " outputs");
  }
  const kernels::ConvGeometry g = kernels::make_conv_geometry(
      input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2), weight.dim(3),
      o.stride_h, o.stride_w, o.pad_h, o.pad_w);
  std::vector<T> out(g.out_size());
  kernels::conv2d_forward(g, input.values().data(), weight.values().data(),
                          bias.defined() ? bias.values().data() : nullptr, out.data());

  const bool has_bias = bias.defined();
  return make_result<T>(
      {g.out_c, g.out_h, g.out_w}, std::move(out), {input, weight, bias},
      [g, has_bias](NodeT<T>& self) {
        NodeT<T>& x = *self.parents[0];
        NodeT<T>& w = *self.parents[1];
        NodeT<T>* b = has_bias ? self.parents[2].get() : nullptr;
        if (x.requires_grad) {
          kernels::conv2d_backward_input(g, self.grad.data(), w.value.data(),
                                         x.grad_buffer().data());
        }
        const bool bias_grad = b && b->requires_grad;
        if (w.requires_grad || bias_grad) {
          std::vector<T> scratch;
          T* gw = nullptr;
          if (w.requires_grad) {
            gw = w.grad_buffer().data();
          } else {
            scratch.assign(w.value.size(), T(0));
            gw = scratch.data();
          }
          kernels::conv2d_backward_weight(g, self.grad.data(), x.value.data(), gw,
                                          bias_grad ? b->grad_buffer().data() : nullptr);
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                           Conv2dOptions o) {
  if (input.rank() != 3 || weight.rank() != 4) {
    throw std::invalid_argument(
        "conv_transpose2d: expected input [C,H,W] and weight [C,O,kH,kW], got " +
        to_string(input.dims()) + " and " + to_string(weight.dims()));
  }
  if (weight.dim(0) != input.dim(0)) {
    throw std::invalid_argument("conv_transpose2d: weight expects " +
                                std::to_string(weight.dim(0)) + " input channels, input has " +
                                std::to_string(input.dim(0)));
  }
  const std::size_t c_out = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != c_out)) {
    throw std::invalid_argument("conv_transpose2d: bias shape mismatch");
  }
  const std::size_t kh = weight.dim(2), kw = weight.dim(3);
  const std::size_t full_h = (input.dim(1) - 1) * o.stride_h + kh;
  const std::size_t full_w = (input.dim(2) - 1) * o.stride_w + kw;
  if (full_h <= 2 * o.pad_h || full_w <= 2 * o.pad_w || o.stride_h == 0 || o.stride_w == 0) {
    throw std::invalid_argument("conv_transpose2d: padding leaves an empty output");
  }
  const std::size_t out_h = full_h - 2 * o.pad_h, out_w = full_w - 2 * o.pad_w;
  // The forward pass is the input-gradient of the conv mapping [c_out,
  // out_h, out_w] onto the input's extents.
  const kernels::ConvGeometry g = kernels::make_conv_geometry(
      c_out, out_h, out_w, input.dim(0), kh, kw, o.stride_h, o.stride_w, o.pad_h, o.pad_w);
  if (g.out_h != input.dim(1) || g.out_w != input.dim(2)) {
    throw std::invalid_argument("conv_transpose2d: inconsistent geometry");
  }
  std::vector<T> out(g.in_size(), T(0));
  kernels::conv2d_backward_input(g, input.values().data(), weight.values().data(), out.data());
  const std::size_t plane = out_h * out_w;
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::size_t c = 0; c < c_out; ++c)
      for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bv[c];
  }

  const bool has_bias = bias.defined();
  return make_result<T>(
      {c_out, out_h, out_w}, std::move(out), {input, weight, bias},
      [g, has_bias, plane](NodeT<T>& self) {
        NodeT<T>& x = *self.parents[0];
        NodeT<T>& w = *self.parents[1];
        NodeT<T>* b = has_bias ? self.parents[2].get() : nullptr;
        if (x.requires_grad) {
          std::vector<T> tmp(g.out_size());
          kernels::conv2d_forward(g, self.grad.data(), w.value.data(), static_cast<const T*>(nullptr),
                                  tmp.data());
          auto& gx = x.grad_buffer();
          for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
        }
        if (w.requires_grad) {
          kernels::conv2d_backward_weight(g, x.value.data(), self.grad.data(),
                                          w.grad_buffer().data(), static_cast<T*>(nullptr));
        }
        if (b && b->requires_grad) {
          auto& gb = b->grad_buffer();
          for (std::size_t c = 0; c < gb.size(); ++c) {
            T s = T(0);
            for (std::size_t i = 0; i < plane; ++i) s += self.grad[c * plane + i];
            gb[c] += s;
          }
        }
      });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  return unary<T>(
      // Written with min/max rather than a select so the loop vectorizes;
      // expm1(0) is exactly 0.
      x, [](T v) { return std::max(v, T(0)) + expm1_nonpositive(std::min(v, T(0))); },
      [](NodeT<T>& self) {
        NodeT<T>& p = *self.parents[0];
        const T* go = self.grad.data();
        const T* y = self.value.data();
        // d/dx is y + 1 below zero and 1 above, i.e. min(y, 0) + 1.
        accumulate(p.grad_buffer(),
                   [=](std::ptrdiff_t i) { return go[i] * (std::min(y[i], T(0)) + T(1)); });
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        // Kept strictly inside (0, 1) even where the exact value rounds to an end.
        constexpr T lo = std::numeric_limits<T>::min();
        constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / 2;
        const T s = exp_nonpositive(std::min(v, T(0))) / (T(1) + exp_nonpositive(-std::abs(v)));
        return std::min(std::max(s, lo), hi);
      },
      [](NodeT<T>& self) {
        const T* go = self.grad.data();
        const T* y = self.value.data();
        accumulate(self.parents[0]->grad_buffer(),
                   [=](std::ptrdiff_t i) { return go[i] * y[i] * (T(1) - y[i]); });
      });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::abs(v); },
      [](NodeT<T>& self) {
        NodeT<T>& p = *self.parents[0];
        const T* go = self.grad.data();
        const T* x = p.value.data();
        accumulate(p.grad_buffer(), [=](std::ptrdiff_t i) { return go[i] * sign_of(x[i]); });
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary<T>(
      x, [factor](T v) { return v * factor; },
      [factor](NodeT<T>& self) {
        const T* go = self.grad.data();
        accumulate(self.parents[0]->grad_buffer(),
                   [=](std::ptrdiff_t i) { return go[i] * factor; });
      });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].dims();
  if (axis >= first.size()) throw std::invalid_argument("concat: axis out of range");
  Shape dims = first;
  dims[axis] = 0;
  for (const auto& p : parts) {
    const Shape& d = p.dims();
    bool ok = d.size() == first.size();
    for (std::size_t i = 0; ok && i < d.size(); ++i) ok = (i == axis) || d[i] == first[i];
    if (!ok) {
      throw std::invalid_argument("concat: " + to_string(d) + " incompatible with " +
                                  to_string(first) + " along axis " + std::to_string(axis));
    }
    dims[axis] += d[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> chunks;
  for (const auto& p : parts) chunks.push_back(p.dim(axis) * inner);
  const std::size_t row = dims[axis] * inner;
  std::vector<T> out(element_count(dims));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t at = o * row;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto v = parts[k].values();
      std::copy_n(v.data() + o * chunks[k], chunks[k], out.data() + at);
      at += chunks[k];
    }
  }

  auto node = std::make_shared<NodeT<T>>();
  node->dims = dims;
  node->value = std::move(out);
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& p : parts) needs_grad = needs_grad || p.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    node->backward = [chunks, outer, row](NodeT<T>& self) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < chunks.size(); ++k) {
        NodeT<T>& p = *self.parents[k];
        if (p.requires_grad) {
          auto& g = p.grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = self.grad.data() + o * row + offset;
            T* dst = g.data() + o * chunks[k];
            for (std::size_t i = 0; i < chunks[k]; ++i) dst[i] += src[i];
          }
        }
        offset += chunks[k];
      }
    };
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  const T* av = a.values().data();
  const T* bv = b.values().data();
  std::vector<T> out(a.numel());
  fill_from(out, [=](std::ptrdiff_t i) { return av[i] + bv[i]; });
  return make_result<T>(a.dims(), std::move(out), {a, b}, [](NodeT<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      const T* go = self.grad.data();
      accumulate(p->grad_buffer(), [=](std::ptrdiff_t i) { return go[i]; });
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  const T* av = a.values().data();
  const T* bv = b.values().data();
  std::vector<T> out(a.numel());
  fill_from(out, [=](std::ptrdiff_t i) { return av[i] - bv[i]; });
  return make_result<T>(a.dims(), std::move(out), {a, b}, [](NodeT<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      NodeT<T>& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const T s = k == 0 ? T(1) : T(-1);
      const T* go = self.grad.data();
      accumulate(p.grad_buffer(), [=](std::ptrdiff_t i) { return s * go[i]; });
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  const T* av = a.values().data();
  const T* bv = b.values().data();
  std::vector<T> out(a.numel());
  fill_from(out, [=](std::ptrdiff_t i) { return av[i] * bv[i]; });
  return make_result<T>(a.dims(), std::move(out), {a, b}, [](NodeT<T>& self) {
    NodeT<T>& pa = *self.parents[0];
    NodeT<T>& pb = *self.parents[1];
    const T* go = self.grad.data();
    const T* av = pa.value.data();
    const T* bv = pb.value.data();
    if (pa.requires_grad) accumulate(pa.grad_buffer(), [=](std::ptrdiff_t i) { return go[i] * bv[i]; });
    if (pb.requires_grad) accumulate(pb.grad_buffer(), [=](std::ptrdiff_t i) { return go[i] * av[i]; });
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.values()) s += v;
  return make_result<T>({}, {s}, {x}, [](NodeT<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> l1_sum(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "l1_sum");
  const auto av = a.values(), bv = b.values();
  T s = T(0);
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  return make_result<T>({}, {s}, {a, b}, [](NodeT<T>& self) {
    NodeT<T>& pa = *self.parents[0];
    NodeT<T>& pb = *self.parents[1];
    const T go = self.grad[0];
    for (std::size_t k = 0; k < 2; ++k) {
      NodeT<T>& p = k == 0 ? pa : pb;
      if (!p.requires_grad) continue;
      const T s = k == 0 ? go : -go;
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * sign_of(pa.value[i] - pb.value[i]);
    }
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() == 0) throw std::invalid_argument("l1_loss: empty tensor");
  return scale(l1_sum(a, b), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

#define PHR_INSTANTIATE(T)                                                                        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                      Conv2dOptions);                                             \
  template Tensor<T> elu(const Tensor<T>&);                                                       \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                   \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                             \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                  \
  template Tensor<T> abs(const Tensor<T>&);                                                       \
  template Tensor<T> sum(const Tensor<T>&);                                                       \
  template Tensor<T> mean(const Tensor<T>&);                                                      \
  template Tensor<T> l1_sum(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                                 \
  template bool all_finite(const Tensor<T>&);

PHR_INSTANTIATE(float)
PHR_INSTANTIATE(double)
#undef PHR_INSTANTIATE

}  // namespace phr::nn
