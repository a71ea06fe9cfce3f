#pragma once

#include <filesystem>
#include <string>

#include "phr/dsp/stft.hpp"

namespace phr::harness {

// Binary 8-bit PGM (P5) of the log magnitude: one column per frame, lowest
// bin on the bottom row, white at the loudest bin, black `range_db` below it.
std::string encode_spectrogram_pgm(const dsp::Spectrogram& spec, double range_db = 80.0);
void write_spectrogram_pgm(const std::filesystem::path& path, const dsp::Spectrogram& spec,
                           double range_db = 80.0);

}  // namespace phr::harness
