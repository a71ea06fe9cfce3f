#include "phr/model/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace phr::model {

Tensor planes_to_tensor(const dsp::PaddedSpectrogram& spec) {
  const std::size_t n = spec.rows * spec.cols;
  std::vector<float> v(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = static_cast<float>(spec.real[i]);
    v[n + i] = static_cast<float>(spec.imag[i]);
  }
  return Tensor({2, spec.rows, spec.cols}, std::move(v));
}

void tensor_to_planes(const Tensor& t, dsp::PaddedSpectrogram& spec) {
  if (t.dims() != nn::Shape{2, spec.rows, spec.cols})
    throw std::invalid_argument("tensor " + nn::to_string(t.dims()) + " does not fit the grid");
  const std::size_t n = spec.rows * spec.cols;
  const auto v = t.values();
  for (std::size_t i = 0; i < n; ++i) {
    spec.real[i] = static_cast<double>(v[i]);
    spec.imag[i] = static_cast<double>(v[n + i]);
  }
}

Tensor embedding_grid(std::size_t bins, std::size_t rows, std::size_t cols, std::size_t channels) {
  if (rows < bins) throw std::invalid_argument("embedding grid smaller than the bin count");
  const std::vector<double> base = dsp::freq_pos_embeddings(bins, channels);
  std::vector<float> v(channels * rows * cols);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t r = 0; r < rows; ++r) {
      const float e = static_cast<float>(base[c * bins + dsp::reflect_index(r, bins)]);
      std::fill_n(v.begin() + static_cast<std::ptrdiff_t>((c * rows + r) * cols), cols, e);
    }
  return Tensor({channels, rows, cols}, std::move(v));
}

}  // namespace phr::model
