#include "phr/numerics/kernels.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace phr::nn::kernels {
namespace {

// Micro-tile: kBlockOut output channels x kTile flat output positions,
// accumulated in a register-sized block.
constexpr std::size_t kBlockOut = 4;
constexpr std::size_t kTile = 64;
constexpr std::size_t kChunk = 256;
constexpr std::size_t kMaxTaps = 64;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// 64-byte SIMD vectors through the GCC/Clang vector extension.
template <typename T>
struct VecOf {
  typedef T type __attribute__((vector_size(64)));
};
template <typename T>
using Vec = typename VecOf<T>::type;
template <typename T>
constexpr std::size_t kLanes = 64 / sizeof(T);

template <typename T>
Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
T lane_sum(const Vec<T>& v) {
  T s = T(0);
  for (std::size_t i = 0; i < kLanes<T>; ++i) s += v[i];
  return s;
}

// Layout used by the unit-stride paths. Each input channel is copied into a
// zero-padded plane of width wp; output position (y, x) maps to the flat
// index q = y * wp + x and reads input q + ky * wp + kx. Columns x >= out_w
// of the flat output are discarded.
struct FlatLayout {
  std::size_t wp = 0;
  std::size_t flat = 0;        // out_h * wp
  std::size_t out_stride = 0;  // flat rounded up to kChunk
  std::size_t in_stride = 0;   // out_stride + largest tap offset
  std::vector<std::size_t> offsets;
};

FlatLayout make_layout(const ConvGeometry& g) {
  FlatLayout l;
  l.wp = g.in_w + 2 * g.pad_w;
  l.flat = g.out_h * l.wp;
  l.out_stride = ceil_div(l.flat, kChunk) * kChunk;
  const std::size_t max_off = (g.kernel_h - 1) * l.wp + (g.kernel_w - 1);
  l.in_stride = l.out_stride + max_off;
  l.offsets.resize(g.kernel_h * g.kernel_w);
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) l.offsets[ky * g.kernel_w + kx] = ky * l.wp + kx;
  return l;
}

// Scratch storage left uninitialized; callers write every element they read.
template <typename T>
using Scratch = std::unique_ptr<T[]>;

template <typename T>
Scratch<T> pad_planes(const ConvGeometry& g, const FlatLayout& l, const T* input) {
  auto planes = std::make_unique_for_overwrite<T[]>(g.in_c * l.in_stride);
#pragma omp parallel for schedule(static) if (g.in_size() > 16384)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.in_c); ++c) {
    T* dst = planes.get() + static_cast<std::size_t>(c) * l.in_stride;
    const T* src = input + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    const std::size_t right = l.wp - g.pad_w - g.in_w;
    std::fill_n(dst, g.pad_h * l.wp, T(0));
    for (std::size_t y = 0; y < g.in_h; ++y) {
      T* row = dst + (y + g.pad_h) * l.wp;
      std::fill_n(row, g.pad_w, T(0));
      std::copy_n(src + y * g.in_w, g.in_w, row + g.pad_w);
      std::fill_n(row + g.pad_w + g.in_w, right, T(0));
    }
    const std::size_t used = (g.in_h + g.pad_h) * l.wp;
    std::fill_n(dst + used, l.in_stride - used, T(0));
  }
  return planes;
}

bool unit_stride(const ConvGeometry& g) {
  return g.stride_h == 1 && g.stride_w == 1 && g.pad_h < g.kernel_h && g.pad_w < g.kernel_w &&
         g.kernel_h * g.kernel_w <= kMaxTaps;
}

template <typename T>
void forward_unit_stride(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                         T* output, bool accumulate) {
  const FlatLayout l = make_layout(g);
  const Scratch<T> planes = pad_planes(g, l, input);
  const std::size_t taps = g.kernel_h * g.kernel_w;
  const std::size_t blocks = ceil_div(g.out_c, kBlockOut);
  const std::size_t tiles = ceil_div(l.flat, kTile);

  // packed[((block * in_c + ci) * taps + tap) * kBlockOut + j]
  std::vector<T> packed(blocks * g.in_c * taps * kBlockOut, T(0));
  for (std::size_t co = 0; co < g.out_c; ++co) {
    const std::size_t b = co / kBlockOut, j = co % kBlockOut;
    for (std::size_t ci = 0; ci < g.in_c; ++ci)
      for (std::size_t tap = 0; tap < taps; ++tap)
        packed[((b * g.in_c + ci) * taps + tap) * kBlockOut + j] =
            weight[(co * g.in_c + ci) * taps + tap];
  }

#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    for (std::ptrdiff_t tile = 0; tile < static_cast<std::ptrdiff_t>(tiles); ++tile) {
      const std::size_t co0 = static_cast<std::size_t>(b) * kBlockOut;
      const std::size_t q0 = static_cast<std::size_t>(tile) * kTile;
      constexpr std::size_t nv = kTile / kLanes<T>;
      Vec<T> acc[kBlockOut][nv];
      for (std::size_t j = 0; j < kBlockOut; ++j) {
        const T init = (bias && co0 + j < g.out_c) ? bias[co0 + j] : T(0);
        for (std::size_t v = 0; v < nv; ++v) acc[j][v] = Vec<T>{} + init;
      }
      const T* wblock = packed.data() + static_cast<std::size_t>(b) * g.in_c * taps * kBlockOut;
      for (std::size_t ci = 0; ci < g.in_c; ++ci) {
        const T* base = planes.get() + ci * l.in_stride + q0;
        for (std::size_t tap = 0; tap < taps; ++tap) {
          const T* src = base + l.offsets[tap];
          const T* wv = wblock + (ci * taps + tap) * kBlockOut;
          Vec<T> x[nv];
          for (std::size_t v = 0; v < nv; ++v) x[v] = load(src + v * kLanes<T>);
          for (std::size_t j = 0; j < kBlockOut; ++j) {
            const Vec<T> w = Vec<T>{} + wv[j];
            for (std::size_t v = 0; v < nv; ++v) acc[j][v] += w * x[v];
          }
        }
      }
      alignas(64) T tile_out[kBlockOut][kTile];
      std::memcpy(tile_out, acc, sizeof tile_out);
      // Copy the tile out row segment by row segment, skipping the padding
      // columns of the flat layout.
      const std::size_t q_end = std::min(q0 + kTile, l.flat);
      for (std::size_t q = q0; q < q_end;) {
        const std::size_t y = q / l.wp, x = q % l.wp;
        const std::size_t run_end = std::min(q_end, q - x + l.wp);
        const std::size_t n = x < g.out_w ? std::min(run_end - q, g.out_w - x) : 0;
        for (std::size_t j = 0; j < kBlockOut && co0 + j < g.out_c; ++j) {
          T* out = output + ((co0 + j) * g.out_h + y) * g.out_w + x;
          const T* a = tile_out[j] + (q - q0);
          if (accumulate) {
            for (std::size_t t = 0; t < n; ++t) out[t] += a[t];
          } else {
            for (std::size_t t = 0; t < n; ++t) out[t] = a[t];
          }
        }
        q = run_end;
      }
    }
  }
}

template <typename T>
void backward_input_unit_stride(const ConvGeometry& g, const T* grad_output, const T* weight,
                                T* grad_input) {
  // The adjoint of a unit-stride correlation is a correlation of the output
  // gradient with the flipped, channel-transposed kernel.
  ConvGeometry adj;
  adj.in_c = g.out_c;
  adj.in_h = g.out_h;
  adj.in_w = g.out_w;
  adj.out_c = g.in_c;
  adj.out_h = g.in_h;
  adj.out_w = g.in_w;
  adj.kernel_h = g.kernel_h;
  adj.kernel_w = g.kernel_w;
  adj.pad_h = g.kernel_h - 1 - g.pad_h;
  adj.pad_w = g.kernel_w - 1 - g.pad_w;
  const std::size_t taps = g.kernel_h * g.kernel_w;
  std::vector<T> flipped(g.weight_size());
  for (std::size_t co = 0; co < g.out_c; ++co)
    for (std::size_t ci = 0; ci < g.in_c; ++ci)
      for (std::size_t tap = 0; tap < taps; ++tap)
        flipped[(ci * g.out_c + co) * taps + (taps - 1 - tap)] = weight[(co * g.in_c + ci) * taps + tap];
  forward_unit_stride(adj, grad_output, flipped.data(), static_cast<const T*>(nullptr), grad_input,
                      true);
}

// Correlates two output-gradient planes with one input plane at every tap.
// Each gradient vector is loaded once and reused across all taps.
template <typename T, std::size_t Taps>
void weight_grad_pair_fixed(const T* g0, const T* g1, const T* plane, const std::size_t* offsets,
                            std::size_t n, T* out0, T* out1) {
  Vec<T> a0[Taps], a1[Taps];
  for (std::size_t t = 0; t < Taps; ++t) a0[t] = a1[t] = Vec<T>{};
  for (std::size_t q = 0; q < n; q += kLanes<T>) {
    const Vec<T> x0 = load(g0 + q), x1 = load(g1 + q);
    for (std::size_t t = 0; t < Taps; ++t) {
      const Vec<T> v = load(plane + q + offsets[t]);
      a0[t] += x0 * v;
      a1[t] += x1 * v;
    }
  }
  for (std::size_t t = 0; t < Taps; ++t) {
    out0[t] = lane_sum<T>(a0[t]);
    out1[t] = lane_sum<T>(a1[t]);
  }
}

// n must be a multiple of the vector width.
template <typename T>
void weight_grad_pair(std::size_t taps, const T* g0, const T* g1, const T* plane,
                      const std::size_t* offsets, std::size_t n, T* out0, T* out1) {
  switch (taps) {
    case 1: return weight_grad_pair_fixed<T, 1>(g0, g1, plane, offsets, n, out0, out1);
    case 4: return weight_grad_pair_fixed<T, 4>(g0, g1, plane, offsets, n, out0, out1);
    case 9: return weight_grad_pair_fixed<T, 9>(g0, g1, plane, offsets, n, out0, out1);
    default: break;
  }
  // Other kernel sizes: groups of up to 9 taps.
  for (std::size_t t0 = 0; t0 < taps; t0 += 9) {
    const std::size_t k = std::min<std::size_t>(9, taps - t0);
    for (std::size_t t = 0; t < k; ++t)
      weight_grad_pair_fixed<T, 1>(g0, g1, plane, offsets + t0 + t, n, out0 + t0 + t, out1 + t0 + t);
  }
}

template <typename T>
void backward_weight_unit_stride(const ConvGeometry& g, const T* grad_output, const T* input,
                                 T* grad_weight, T* grad_bias) {
  const FlatLayout l = make_layout(g);
  const Scratch<T> planes = pad_planes(g, l, input);
  const std::size_t taps = g.kernel_h * g.kernel_w;

  // Output gradient in the flat layout with discarded columns zeroed.
  auto flat_grad = std::make_unique_for_overwrite<T[]>(g.out_c * l.out_stride);
  for (std::size_t co = 0; co < g.out_c; ++co) {
    T* dst = flat_grad.get() + co * l.out_stride;
    for (std::size_t y = 0; y < g.out_h; ++y) {
      std::copy_n(grad_output + (co * g.out_h + y) * g.out_w, g.out_w, dst + y * l.wp);
      std::fill_n(dst + y * l.wp + g.out_w, l.wp - g.out_w, T(0));
    }
    std::fill_n(dst + l.flat, l.out_stride - l.flat, T(0));
  }

  const std::size_t pairs = ceil_div(g.out_c, 2);
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t pr = 0; pr < static_cast<std::ptrdiff_t>(pairs); ++pr) {
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(g.in_c); ++ci) {
      const std::size_t co0 = 2 * static_cast<std::size_t>(pr);
      const std::size_t co1 = std::min(co0 + 1, g.out_c - 1);
      std::array<T, kMaxTaps> s0{}, s1{};
      weight_grad_pair<T>(taps, flat_grad.get() + co0 * l.out_stride,
                          flat_grad.get() + co1 * l.out_stride,
                          planes.get() + static_cast<std::size_t>(ci) * l.in_stride,
                          l.offsets.data(), l.out_stride, s0.data(), s1.data());
      T* gw0 = grad_weight + (co0 * g.in_c + static_cast<std::size_t>(ci)) * taps;
      for (std::size_t tap = 0; tap < taps; ++tap) gw0[tap] += s0[tap];
      if (co1 != co0) {
        T* gw1 = grad_weight + (co1 * g.in_c + static_cast<std::size_t>(ci)) * taps;
        for (std::size_t tap = 0; tap < taps; ++tap) gw1[tap] += s1[tap];
      }
    }
  }
  if (grad_bias) {
    for (std::size_t co = 0; co < g.out_c; ++co) {
      const T* gq = flat_grad.get() + co * l.out_stride;
      T s = T(0);
      for (std::size_t q = 0; q < l.out_stride; ++q) s += gq[q];
      grad_bias[co] += s;
    }
  }
}

// Polyphase form of a strided correlation: phase (py, px) of the padded input
// becomes its own channel, and the kernel splits into ceil(k / s) sized
// sub-kernels, giving a unit-stride, zero-pad correlation with the same
// output extents. Phase planes are sized so that the output is exact;
// samples beyond the padded input read as zero.
struct Polyphase {
  ConvGeometry unit;
  std::size_t phases = 0;
};

Polyphase make_polyphase(const ConvGeometry& g) {
  Polyphase p;
  p.phases = g.stride_h * g.stride_w;
  ConvGeometry& u = p.unit;
  u.in_c = g.in_c * p.phases;
  u.out_c = g.out_c;
  u.kernel_h = ceil_div(g.kernel_h, g.stride_h);
  u.kernel_w = ceil_div(g.kernel_w, g.stride_w);
  u.out_h = g.out_h;
  u.out_w = g.out_w;
  u.in_h = g.out_h + u.kernel_h - 1;
  u.in_w = g.out_w + u.kernel_w - 1;
  return p;
}

bool polyphase_ok(const ConvGeometry& g) {
  const std::size_t th = ceil_div(g.kernel_h, g.stride_h), tw = ceil_div(g.kernel_w, g.stride_w);
  return (g.stride_h > 1 || g.stride_w > 1) && th * tw <= kMaxTaps;
}

// Calls f(c, phase, i, j, src_index) for every phase-plane sample that maps
// onto a real (non-padding) input sample.
template <typename F>
void for_each_phase_sample(const ConvGeometry& g, const Polyphase& p, std::size_t c, F&& f) {
  const ConvGeometry& u = p.unit;
  for (std::size_t py = 0; py < g.stride_h; ++py)
    for (std::size_t px = 0; px < g.stride_w; ++px) {
      const std::size_t phase = py * g.stride_w + px;
      for (std::size_t i = 0; i < u.in_h; ++i) {
        const std::size_t yp = i * g.stride_h + py;
        if (yp < g.pad_h || yp - g.pad_h >= g.in_h) continue;
        const std::size_t y = yp - g.pad_h;
        for (std::size_t j = 0; j < u.in_w; ++j) {
          const std::size_t xp = j * g.stride_w + px;
          if (xp < g.pad_w || xp - g.pad_w >= g.in_w) continue;
          f(phase, i, j, (c * g.in_h + y) * g.in_w + (xp - g.pad_w));
        }
      }
    }
}

template <typename T>
std::vector<T> gather_phases(const ConvGeometry& g, const Polyphase& p, const T* input) {
  const ConvGeometry& u = p.unit;
  std::vector<T> out(u.in_size(), T(0));
#pragma omp parallel for schedule(static) if (g.in_size() > 16384)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.in_c); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    for_each_phase_sample(g, p, cc, [&](std::size_t phase, std::size_t i, std::size_t j,
                                        std::size_t src) {
      out[((cc * p.phases + phase) * u.in_h + i) * u.in_w + j] = input[src];
    });
  }
  return out;
}

// Unit weight [out_c, in_c * phases, th, tw]; taps past the kernel are zero.
template <typename T>
std::vector<T> split_weight(const ConvGeometry& g, const Polyphase& p, const T* weight) {
  const ConvGeometry& u = p.unit;
  std::vector<T> out(u.weight_size(), T(0));
  for (std::size_t o = 0; o < g.out_c; ++o)
    for (std::size_t c = 0; c < g.in_c; ++c)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const std::size_t phase = (ky % g.stride_h) * g.stride_w + (kx % g.stride_w);
          const std::size_t a = ky / g.stride_h, b = kx / g.stride_w;
          out[((o * u.in_c + c * p.phases + phase) * u.kernel_h + a) * u.kernel_w + b] =
              weight[((o * g.in_c + c) * g.kernel_h + ky) * g.kernel_w + kx];
        }
  return out;
}

// Range of output indices o with o * stride + k - pad inside [0, extent).
struct ValidRange {
  std::size_t begin = 0, end = 0;
};

ValidRange valid_outputs(std::size_t k, std::size_t stride, std::size_t pad, std::size_t extent,
                         std::size_t out_extent) {
  ValidRange r;
  r.begin = pad > k ? ceil_div(pad - k, stride) : 0;
  if (extent + pad <= k) return {0, 0};
  r.end = std::min(out_extent, (extent - 1 + pad - k) / stride + 1);
  if (r.end < r.begin) r.end = r.begin;
  return r;
}

template <typename T>
void forward_generic(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                     T* output) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(g.out_c); ++co) {
    for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(g.out_h); ++oy) {
      const auto c = static_cast<std::size_t>(co);
      const auto y = static_cast<std::size_t>(oy);
      T* orow = output + (c * g.out_h + y) * g.out_w;
      std::fill_n(orow, g.out_w, bias ? bias[c] : T(0));
      for (std::size_t ci = 0; ci < g.in_c; ++ci) {
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride_h + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          const T* irow = input + (ci * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const T w = weight[((c * g.in_c + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            const ValidRange r = valid_outputs(kx, g.stride_w, g.pad_w, g.in_w, g.out_w);
            for (std::size_t ox = r.begin; ox < r.end; ++ox)
              orow[ox] += w * irow[ox * g.stride_w + kx - g.pad_w];
          }
        }
      }
    }
  }
}

template <typename T>
void backward_input_generic(const ConvGeometry& g, const T* grad_output, const T* weight,
                            T* grad_input) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(g.in_c); ++ci) {
    for (std::ptrdiff_t iy = 0; iy < static_cast<std::ptrdiff_t>(g.in_h); ++iy) {
      const auto c = static_cast<std::size_t>(ci);
      const auto y = static_cast<std::size_t>(iy);
      T* grow = grad_input + (c * g.in_h + y) * g.in_w;
      for (std::size_t co = 0; co < g.out_c; ++co) {
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(y + g.pad_h) -
                                   static_cast<std::ptrdiff_t>(ky);
          if (t < 0 || static_cast<std::size_t>(t) % g.stride_h != 0) continue;
          const std::size_t oy = static_cast<std::size_t>(t) / g.stride_h;
          if (oy >= g.out_h) continue;
          const T* gorow = grad_output + (co * g.out_h + oy) * g.out_w;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const T w = weight[((co * g.in_c + c) * g.kernel_h + ky) * g.kernel_w + kx];
            const ValidRange r = valid_outputs(kx, g.stride_w, g.pad_w, g.in_w, g.out_w);
            for (std::size_t ox = r.begin; ox < r.end; ++ox)
              grow[ox * g.stride_w + kx - g.pad_w] += w * gorow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void backward_weight_generic(const ConvGeometry& g, const T* grad_output, const T* input,
                             T* grad_weight, T* grad_bias) {
#pragma omp parallel for collapse(2) schedule(static)
  for (std::ptrdiff_t co = 0; co < static_cast<std::ptrdiff_t>(g.out_c); ++co) {
    for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(g.in_c); ++ci) {
      const auto o = static_cast<std::size_t>(co);
      const auto c = static_cast<std::size_t>(ci);
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const ValidRange r = valid_outputs(kx, g.stride_w, g.pad_w, g.in_w, g.out_w);
          T acc = T(0);
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride_h + ky) -
                                      static_cast<std::ptrdiff_t>(g.pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            const T* gorow = grad_output + (o * g.out_h + oy) * g.out_w;
            const T* irow = input + (c * g.in_h + static_cast<std::size_t>(iy)) * g.in_w;
            for (std::size_t ox = r.begin; ox < r.end; ++ox)
              acc += gorow[ox] * irow[ox * g.stride_w + kx - g.pad_w];
          }
          grad_weight[((o * g.in_c + c) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
        }
      }
    }
  }
  if (grad_bias) {
    for (std::size_t co = 0; co < g.out_c; ++co) {
      const T* go = grad_output + co * g.out_h * g.out_w;
      T s = T(0);
      for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) s += go[i];
      grad_bias[co] += s;
    }
  }
}

}  // namespace

ConvGeometry make_conv_geometry(std::size_t in_c, std::size_t in_h, std::size_t in_w,
                                std::size_t out_c, std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t stride_h, std::size_t stride_w, std::size_t pad_h,
                                std::size_t pad_w) {
  if (stride_h == 0 || stride_w == 0) throw std::invalid_argument("conv: stride must be >= 1");
  if (kernel_h == 0 || kernel_w == 0) throw std::invalid_argument("conv: empty kernel");
  if (in_h + 2 * pad_h < kernel_h || in_w + 2 * pad_w < kernel_w) {
    throw std::invalid_argument("conv: padded input " + std::to_string(in_h + 2 * pad_h) + "x" +
                                std::to_string(in_w + 2 * pad_w) + " smaller than kernel " +
                                std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
  }
  ConvGeometry g;
  g.in_c = in_c;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_c = out_c;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride_h = stride_h;
  g.stride_w = stride_w;
  g.pad_h = pad_h;
  g.pad_w = pad_w;
  g.out_h = (in_h + 2 * pad_h - kernel_h) / stride_h + 1;
  g.out_w = (in_w + 2 * pad_w - kernel_w) / stride_w + 1;
  return g;
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias,
                    T* output) {
  if (unit_stride(g)) {
    forward_unit_stride(g, input, weight, bias, output, false);
  } else if (polyphase_ok(g)) {
    const Polyphase p = make_polyphase(g);
    const std::vector<T> phases = gather_phases(g, p, input);
    const std::vector<T> w = split_weight(g, p, weight);
    forward_unit_stride(p.unit, phases.data(), w.data(), bias, output, false);
  } else {
    forward_generic(g, input, weight, bias, output);
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, const T* grad_output, const T* weight,
                           T* grad_input) {
  if (unit_stride(g)) {
    backward_input_unit_stride(g, grad_output, weight, grad_input);
  } else if (polyphase_ok(g)) {
    const Polyphase p = make_polyphase(g);
    const std::vector<T> w = split_weight(g, p, weight);
    std::vector<T> grad_phases(p.unit.in_size(), T(0));
    backward_input_unit_stride(p.unit, grad_output, w.data(), grad_phases.data());
    const ConvGeometry& u = p.unit;
#pragma omp parallel for schedule(static) if (g.in_size() > 16384)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(g.in_c); ++c) {
      const auto cc = static_cast<std::size_t>(c);
      for_each_phase_sample(g, p, cc, [&](std::size_t phase, std::size_t i, std::size_t j,
                                          std::size_t dst) {
        grad_input[dst] += grad_phases[((cc * p.phases + phase) * u.in_h + i) * u.in_w + j];
      });
    }
  } else {
    backward_input_generic(g, grad_output, weight, grad_input);
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, const T* grad_output, const T* input,
                            T* grad_weight, T* grad_bias) {
  if (unit_stride(g)) {
    backward_weight_unit_stride(g, grad_output, input, grad_weight, grad_bias);
  } else if (polyphase_ok(g)) {
    const Polyphase p = make_polyphase(g);
    const ConvGeometry& u = p.unit;
    const std::vector<T> phases = gather_phases(g, p, input);
    std::vector<T> gw(u.weight_size(), T(0));
    backward_weight_unit_stride(u, grad_output, phases.data(), gw.data(), grad_bias);
    for (std::size_t o = 0; o < g.out_c; ++o)
      for (std::size_t c = 0; c < g.in_c; ++c)
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const std::size_t phase = (ky % g.stride_h) * g.stride_w + (kx % g.stride_w);
            const std::size_t a = ky / g.stride_h, b = kx / g.stride_w;
            grad_weight[((o * g.in_c + c) * g.kernel_h + ky) * g.kernel_w + kx] +=
                gw[((o * u.in_c + c * p.phases + phase) * u.kernel_h + a) * u.kernel_w + b];
          }
  } else {
    backward_weight_generic(g, grad_output, input, grad_weight, grad_bias);
  }
}

#define PHR_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*); \
  template void conv2d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);    \
  template void conv2d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);

PHR_INSTANTIATE(float)
PHR_INSTANTIATE(double)
#undef PHR_INSTANTIATE

}  // namespace phr::nn::kernels
