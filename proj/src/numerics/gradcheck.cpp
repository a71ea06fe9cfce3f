#include "phr/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "phr/numerics/ops.hpp"

namespace phr::nn {
namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

Tensor<double> random_tensor(std::mt19937_64& rng, Shape dims, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(element_count(dims));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor<double>(std::move(dims), std::move(v), true);
}

// Values with magnitude in [0.1, 1], so |x| and friends stay away from the kink.
Tensor<double> away_from_zero(std::mt19937_64& rng, Shape dims) {
  std::vector<double> v(element_count(dims));
  for (auto& x : v) x = (rng() & 1 ? 1.0 : -1.0) * uniform(rng, 0.1, 1.0);
  return Tensor<double>(std::move(dims), std::move(v), true);
}

double projected(const DoubleFn& f, const std::vector<Tensor<double>>& inputs,
                 const std::vector<double>& weights) {
  const Tensor<double> result = f(inputs);
  const auto out = result.values();
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

struct Case {
  std::string label;
  DoubleFn fn;
  std::vector<Tensor<double>> inputs;
};

using CaseFactory = std::function<Case(std::mt19937_64&)>;

std::string describe(const std::vector<Tensor<double>>& inputs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < inputs.size(); ++i) os << (i ? " " : "") << to_string(inputs[i].dims());
  return os.str();
}

Case conv_case(std::mt19937_64& rng) {
  const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t kh = pick(rng, 1, 4), kw = pick(rng, 1, 4);
  Conv2dOptions o{pick(rng, 1, 2), pick(rng, 1, 2), pick(rng, 0, kh - 1), pick(rng, 0, kw - 1)};
  const std::size_t h = pick(rng, std::max<std::size_t>(1, kh), kh + 5);
  const std::size_t w = pick(rng, std::max<std::size_t>(1, kw), kw + 5);
  std::vector<Tensor<double>> in{random_tensor(rng, {cin, h, w}),
                                 random_tensor(rng, {cout, cin, kh, kw}),
                                 random_tensor(rng, {cout})};
  std::ostringstream label;
  label << describe(in) << " stride " << o.stride_h << "x" << o.stride_w << " pad " << o.pad_h
        << "x" << o.pad_w;
  return {label.str(), [o](const auto& t) { return conv2d(t[0], t[1], t[2], o); }, std::move(in)};
}

Case conv_transpose_case(std::mt19937_64& rng) {
  const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
  const std::size_t k = pick(rng, 1, 4);
  const std::size_t stride = pick(rng, 1, 2);
  const std::size_t pad = pick(rng, 0, (k - 1) / 2);
  const std::size_t h = pick(rng, 2, 6), w = pick(rng, 2, 6);
  std::vector<Tensor<double>> in{random_tensor(rng, {cin, h, w}),
                                 random_tensor(rng, {cin, cout, k, k}),
                                 random_tensor(rng, {cout})};
  const Conv2dOptions o{stride, stride, pad, pad};
  std::ostringstream label;
  label << describe(in) << " stride " << stride << " pad " << pad;
  return {label.str(), [o](const auto& t) { return conv_transpose2d(t[0], t[1], t[2], o); },
          std::move(in)};
}

Shape random_shape(std::mt19937_64& rng) {
  Shape s(pick(rng, 1, 3));
  for (auto& d : s) d = pick(rng, 1, 5);
  return s;
}

template <typename F>
CaseFactory unary_case(F op, bool avoid_zero, double spread) {
  return [op, avoid_zero, spread](std::mt19937_64& rng) {
    const Shape s = random_shape(rng);
    std::vector<Tensor<double>> in{avoid_zero ? away_from_zero(rng, s)
                                              : random_tensor(rng, s, -spread, spread)};
    return Case{describe(in), [op](const auto& t) { return op(t[0]); }, std::move(in)};
  };
}

template <typename F>
CaseFactory binary_case(F op, bool separate) {
  return [op, separate](std::mt19937_64& rng) {
    const Shape s = random_shape(rng);
    std::vector<Tensor<double>> in{random_tensor(rng, s), random_tensor(rng, s)};
    if (separate) {
      // Keep |a - b| >= 0.1 so the L1 kink is never inside the stencil.
      auto a = in[0].values();
      auto b = in[1].mutable_values();
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (std::abs(a[i] - b[i]) < 0.1) b[i] = a[i] + (b[i] >= a[i] ? 0.1 : -0.1);
      }
    }
    return Case{describe(in), [op](const auto& t) { return op(t[0], t[1]); }, std::move(in)};
  };
}

Case concat_case(std::mt19937_64& rng) {
  const Shape base = random_shape(rng);
  const std::size_t axis = pick(rng, 0, base.size() - 1);
  std::vector<Tensor<double>> in;
  const std::size_t parts = pick(rng, 2, 3);
  for (std::size_t k = 0; k < parts; ++k) {
    Shape s = base;
    s[axis] = pick(rng, 1, 4);
    in.push_back(random_tensor(rng, s));
  }
  return {describe(in) + " axis " + std::to_string(axis),
          [axis](const auto& t) { return concat<double>(t, axis); }, std::move(in)};
}

}  // namespace

double gradient_error(const DoubleFn& f, std::vector<Tensor<double>> inputs, double step,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t out_size = [&] {
    NoGradGuard guard;
    return f(inputs).numel();
  }();
  std::vector<double> weights(out_size);
  for (auto& w : weights) w = uniform(rng, -1.0, 1.0);

  for (auto& t : inputs) t.zero_grad();
  const Tensor<double> out = f(inputs);
  const Tensor<double> r(out.dims(), weights);
  sum(mul(out, r)).backward();

  double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
  NoGradGuard guard;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + step;
      const double plus = projected(f, inputs, weights);
      v[i] = saved - step;
      const double minus = projected(f, inputs, weights);
      v[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      analytic2 += analytic[i] * analytic[i];
      numeric2 += numeric * numeric;
    }
  }
  const double denom = std::sqrt(std::max(analytic2, numeric2));
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

std::vector<OpCheck> run_gradcheck_suite(const GradcheckOptions& options) {
  const std::vector<std::pair<std::string, CaseFactory>> suite = {
      {"conv2d", conv_case},
      {"conv_transpose2d", conv_transpose_case},
      {"elu", unary_case([](const auto& x) { return elu(x); }, false, 3.0)},
      {"sigmoid", unary_case([](const auto& x) { return sigmoid(x); }, false, 4.0)},
      {"abs", unary_case([](const auto& x) { return abs(x); }, true, 1.0)},
      {"scale", unary_case([](const auto& x) { return scale(x, -1.7); }, false, 1.0)},
      {"sum", unary_case([](const auto& x) { return sum(x); }, false, 1.0)},
      {"mean", unary_case([](const auto& x) { return mean(x); }, false, 1.0)},
      {"concat", concat_case},
      {"add", binary_case([](const auto& a, const auto& b) { return add(a, b); }, false)},
      {"sub", binary_case([](const auto& a, const auto& b) { return sub(a, b); }, false)},
      {"mul", binary_case([](const auto& a, const auto& b) { return mul(a, b); }, false)},
      {"l1_sum", binary_case([](const auto& a, const auto& b) { return l1_sum(a, b); }, true)},
      {"l1_loss", binary_case([](const auto& a, const auto& b) { return l1_loss(a, b); }, true)},
  };

  std::vector<OpCheck> results;
  std::mt19937_64 rng(options.seed);
  for (const auto& [name, factory] : suite) {
    OpCheck check{name, 0, 0.0, {}, options.tolerance};
    for (std::size_t c = 0; c < options.cases_per_op; ++c) {
      Case k = factory(rng);
      const double err = gradient_error(k.fn, std::move(k.inputs), options.step, rng());
      ++check.cases;
      if (err >= check.worst_error) {
        check.worst_error = err;
        check.worst_case = k.label;
      }
    }
    results.push_back(std::move(check));
  }
  return results;
}

}  // namespace phr::nn
