#include "phr/dsp/audio.hpp"

#include <algorithm>
#include <cmath>

namespace phr::dsp {

double AudioBuffer::peak() const {
  double p = 0.0;
  for (double s : samples) p = std::max(p, std::abs(s));
  return p;
}

double AudioBuffer::power() const {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

double AudioBuffer::rms() const { return std::sqrt(power()); }

bool AudioBuffer::all_finite() const {
  return std::all_of(samples.begin(), samples.end(), [](double s) { return std::isfinite(s); });
}

AudioBuffer AudioBuffer::slice(std::size_t begin, std::size_t count) const {
  begin = std::min(begin, samples.size());
  const std::size_t end = std::min(samples.size(), begin + count);
  return AudioBuffer(std::vector<double>(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                                         samples.begin() + static_cast<std::ptrdiff_t>(end)),
                     sample_rate);
}

}  // namespace phr::dsp
