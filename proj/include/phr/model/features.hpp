#pragma once

#include <cstddef>

#include "phr/dsp/stft.hpp"
#include "phr/model/network.hpp"

namespace phr::model {

// [2, rows, cols] tensor holding the raw real and imaginary planes.
Tensor planes_to_tensor(const dsp::PaddedSpectrogram& spec);
// Writes a [2, rows, cols] tensor back into `spec`.
void tensor_to_planes(const Tensor& t, dsp::PaddedSpectrogram& spec);

// Embedding channels over `bins` frequencies, reflect-extended to `rows`
// exactly like pad_to_grid and repeated along `cols` frames.
Tensor embedding_grid(std::size_t bins, std::size_t rows, std::size_t cols,
                      std::size_t channels = 10);

}  // namespace phr::model
