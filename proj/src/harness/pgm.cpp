#include "phr/harness/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "phr/common/error.hpp"

namespace phr::harness {

std::string encode_spectrogram_pgm(const dsp::Spectrogram& spec, double range_db) {
  if (!(range_db > 0.0)) throw std::invalid_argument("encode_spectrogram_pgm: range must be positive");
  std::string out = "P5\n" + std::to_string(spec.frames) + ' ' + std::to_string(spec.bins) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + spec.bins * spec.frames, '\0');
  double peak = 0.0;
  for (std::size_t k = 0; k < spec.bins; ++k)
    for (std::size_t t = 0; t < spec.frames; ++t) peak = std::max(peak, spec.power(k, t));
  if (peak == 0.0) return out;
  for (std::size_t k = 0; k < spec.bins; ++k) {
    const std::size_t row = spec.bins - 1 - k;
    for (std::size_t t = 0; t < spec.frames; ++t) {
      const double p = spec.power(k, t);
      const double db = p > 0.0 ? 10.0 * std::log10(p / peak) : -range_db;
      const double v = std::clamp(1.0 + db / range_db, 0.0, 1.0);
      out[header + row * spec.frames + t] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v)));
    }
  }
  return out;
}

void write_spectrogram_pgm(const std::filesystem::path& path, const dsp::Spectrogram& spec,
                           double range_db) {
  const std::string bytes = encode_spectrogram_pgm(spec, range_db);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("cannot write " + path.string());
}

}  // namespace phr::harness
