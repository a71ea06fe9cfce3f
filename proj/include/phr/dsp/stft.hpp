#pragma once

#include <cstddef>
#include <vector>

#include "phr/dsp/audio.hpp"

namespace phr::dsp {

enum class WindowKind { Hamming };

struct StftConfig {
  std::size_t window_size = 2048;
  std::size_t hop = 512;
  WindowKind window_kind = WindowKind::Hamming;

  std::size_t bins() const { return window_size / 2 + 1; }
  // Number of analysis frames for a signal of `length` samples (no padding).
  std::size_t frames_for(std::size_t length) const;
  // Length produced by overlap-add of `frames` frames.
  std::size_t length_for(std::size_t frames) const;

  // Throws std::invalid_argument unless hop >= 1, hop divides window_size
  // and window_size >= 2 * hop.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

// Complex STFT grid kept as two real planes, bins x frames, row-major with
// the frame index fastest: plane[bin * frames + frame].
struct Spectrogram {
  StftConfig config;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> real;
  std::vector<double> imag;

  Spectrogram() = default;
  Spectrogram(const StftConfig& cfg, std::size_t n_frames);

  std::size_t index(std::size_t bin, std::size_t frame) const { return bin * frames + frame; }
  double power(std::size_t bin, std::size_t frame) const {
    const std::size_t i = index(bin, frame);
    return real[i] * real[i] + imag[i] * imag[i];
  }
  bool all_finite() const;
};

// Periodic Hamming window: 0.54 - 0.46 cos(2 pi n / size).
std::vector<double> hamming_window(std::size_t size);

std::vector<double> analysis_window(const StftConfig& cfg);

// Frames are taken without padding: frames = 1 + (len - window) / hop.
Spectrogram stft(const AudioBuffer& audio, const StftConfig& cfg = {});

// Weighted overlap-add normalized per sample by the summed squared window.
// Output length is window + (frames - 1) * hop.
AudioBuffer istft(const Spectrogram& spec);

// Signals of arbitrary length are padded with zeros so that every original
// sample is covered by window/hop frames. `offset` is the number of leading
// zeros, needed to undo the padding after synthesis.
struct PaddedAnalysis {
  Spectrogram spec;
  std::size_t offset = 0;
  std::size_t length = 0;
};

PaddedAnalysis stft_full(const AudioBuffer& audio, const StftConfig& cfg = {});
AudioBuffer istft_full(const Spectrogram& spec, std::size_t offset, std::size_t length);

// channels x bins grid: channel 2i is sin(2^i pi nu), channel 2i+1 is
// cos(2^i pi nu), with nu = bin / (bins - 1).
std::vector<double> freq_pos_embeddings(std::size_t bins, std::size_t channels = 10);

struct GridDims {
  std::size_t bins = 0;
  std::size_t frames = 0;
  bool operator==(const GridDims&) const = default;
};

// A spectrogram whose planes have been reflect-padded at the high-bin and
// late-frame edges up to a multiple of the U-Net grid.
struct PaddedSpectrogram {
  StftConfig config;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> real;
  std::vector<double> imag;
  GridDims original;
};

// Index into [0, n) for position i under whole-sample mirror reflection.
std::size_t reflect_index(std::size_t i, std::size_t n);

std::size_t round_up(std::size_t value, std::size_t multiple);

PaddedSpectrogram pad_to_grid(const Spectrogram& spec, std::size_t multiple = 16);
Spectrogram crop_from_grid(const PaddedSpectrogram& padded);

}  // namespace phr::dsp
