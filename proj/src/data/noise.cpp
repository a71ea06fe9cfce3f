#include "phr/data/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phr::data {
namespace {

double percentile_of(std::vector<double> values, double pct) {
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

}  // namespace

std::vector<NoiseSegment> extract_noise_segments(const dsp::AudioBuffer& audio,
                                                 const std::string& source_id,
                                                 const ExtractOptions& o) {
  const int rate = audio.sample_rate;
  const std::size_t frame = dsp::seconds_to_samples(o.frame_seconds, rate);
  const std::size_t hop = dsp::seconds_to_samples(o.hop_seconds, rate);
  if (frame == 0 || hop == 0) throw std::invalid_argument("extract_noise_segments: bad framing");
  std::vector<NoiseSegment> out;
  if (audio.size() < frame) return out;

  const std::size_t frames = 1 + (audio.size() - frame) / hop;
  std::vector<double> level(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double s = 0.0;
    for (std::size_t i = 0; i < frame; ++i) {
      const double v = audio.samples[f * hop + i];
      s += v * v;
    }
    level[f] = 10.0 * std::log10(s / static_cast<double>(frame) + 1e-20);
  }
  const double threshold =
      std::min(percentile_of(level, o.percentile) + o.margin_db, o.ceiling_dbfs);

  const std::size_t min_len = dsp::seconds_to_samples(o.min_seconds, rate);
  std::size_t f = 0;
  while (f < frames) {
    if (level[f] > threshold) {
      ++f;
      continue;
    }
    const std::size_t first = f;
    while (f < frames && level[f] <= threshold) ++f;
    // The run covers frames [first, f).
    const std::size_t begin = first * hop;
    const std::size_t end = (f - 1) * hop + frame;
    if (end - begin < min_len) continue;
    NoiseSegment seg;
    seg.audio = audio.slice(begin, end - begin);
    seg.source_id = source_id;
    seg.start = static_cast<double>(begin) / rate;
    seg.end = static_cast<double>(end) / rate;
    seg.rms = seg.audio.rms();
    if (seg.rms > 0.0) out.push_back(std::move(seg));
  }
  return out;
}

ExtendedNoise extend_noise(const dsp::AudioBuffer& segment, std::size_t target_samples,
                           double crossfade_seconds) {
  const std::size_t fade = dsp::seconds_to_samples(crossfade_seconds, segment.sample_rate);
  const std::size_t len = segment.size();
  if (fade == 0 || len < 2 * fade) {
    throw std::invalid_argument("extend_noise: segment of " + std::to_string(len) +
                                " samples is shorter than two crossfades");
  }
  ExtendedNoise out;
  out.audio.sample_rate = segment.sample_rate;
  auto& y = out.audio.samples;
  const auto& s = segment.samples;
  if (target_samples <= len) {
    y.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(target_samples));
    return out;
  }

  std::vector<double> fade_in(fade), fade_out(fade);
  for (std::size_t i = 0; i < fade; ++i) {
    const double theta = 0.5 * std::numbers::pi * (static_cast<double>(i) + 0.5) / fade;
    fade_in[i] = std::sin(theta);
    fade_out[i] = std::cos(theta);
  }

  y.reserve(target_samples + len);
  y.assign(s.begin(), s.end());
  while (y.size() < target_samples) {
    const std::size_t at = y.size() - fade;
    out.crossfades.push_back(at);
    for (std::size_t i = 0; i < fade; ++i) y[at + i] = y[at + i] * fade_out[i] + s[i] * fade_in[i];
    y.insert(y.end(), s.begin() + static_cast<std::ptrdiff_t>(fade), s.end());
  }
  y.resize(target_samples);
  return out;
}

}  // namespace phr::data
