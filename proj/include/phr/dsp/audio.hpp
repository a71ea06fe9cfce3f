#pragma once

#include <cstddef>
#include <vector>

namespace phr::dsp {

inline constexpr int kSampleRate = 44100;

// Mono sample sequence at 44.1 kHz. Samples are nominally in [-1, 1] but
// the float pipeline never clips.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  AudioBuffer() = default;
  explicit AudioBuffer(std::vector<double> s, int rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  static AudioBuffer zeros(std::size_t n) { return AudioBuffer(std::vector<double>(n, 0.0)); }

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  double peak() const;
  double rms() const;
  // Mean squared amplitude.
  double power() const;
  bool all_finite() const;

  // Copy of [begin, begin + count), clamped to the buffer.
  AudioBuffer slice(std::size_t begin, std::size_t count) const;
};

inline std::size_t seconds_to_samples(double seconds, int rate = kSampleRate) {
  return static_cast<std::size_t>(seconds * rate + 0.5);
}

}  // namespace phr::dsp
