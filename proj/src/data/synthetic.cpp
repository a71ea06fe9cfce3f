#include "phr/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "phr/dsp/wav.hpp"

namespace phr::data {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double midi_hz(double note) { return 440.0 * std::pow(2.0, (note - 69.0) / 12.0); }

struct Voice {
  std::vector<double> harmonics;  // amplitude of harmonic k + 1
  double attack = 0.01;           // seconds
  double release = 0.05;
  double decay_tau = 0.0;         // 0 = sustained
  double vibrato_rate = 0.0;      // Hz
  double vibrato_depth = 0.0;     // relative frequency deviation
};

void render_note(std::vector<double>& out, double start, double duration, double f0, double amp,
                 const Voice& v, double phase0) {
  const double sr = dsp::kSampleRate;
  const std::size_t begin = static_cast<std::size_t>(start * sr);
  const std::size_t len = static_cast<std::size_t>((duration + v.release) * sr);
  const std::size_t hold = static_cast<std::size_t>(duration * sr);
  std::size_t kmax = 0;
  while (kmax < v.harmonics.size() && (kmax + 1) * f0 * (1.0 + v.vibrato_depth) < 0.45 * sr) ++kmax;
  double phase = phase0;
  for (std::size_t i = 0; i < len && begin + i < out.size(); ++i) {
    const double t = i / sr;
    double env = std::min(1.0, t / v.attack);
    if (v.decay_tau > 0.0) env *= std::exp(-t / v.decay_tau);
    if (i >= hold) env *= std::max(0.0, 1.0 - static_cast<double>(i - hold) / (v.release * sr));
    const double f = f0 * (1.0 + v.vibrato_depth * std::sin(kTwoPi * v.vibrato_rate * t));
    phase += kTwoPi * f / sr;
    double s = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) s += v.harmonics[k] * std::sin((k + 1) * phase);
    out[begin + i] += amp * env * s;
  }
}

std::vector<double> power_law(std::size_t count, double exponent, bool odd_only = false) {
  std::vector<double> h(count, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    if (odd_only && (k % 2) == 1) continue;
    h[k] = 1.0 / std::pow(static_cast<double>(k + 1), exponent);
  }
  return h;
}

// Vowel-like spectral envelope for a sung voice.
std::vector<double> formant_harmonics(double f0, std::size_t count) {
  constexpr double centers[] = {700.0, 1200.0, 2900.0};
  constexpr double widths[] = {150.0, 200.0, 400.0};
  constexpr double gains[] = {1.0, 0.6, 0.35};
  std::vector<double> h(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double f = (k + 1) * f0;
    double g = 0.05;
    for (int j = 0; j < 3; ++j) {
      const double d = (f - centers[j]) / widths[j];
      g += gains[j] * std::exp(-0.5 * d * d);
    }
    h[k] = g / std::sqrt(static_cast<double>(k + 1));
  }
  return h;
}

void normalize_rms(std::vector<double>& x, double rms) {
  double p = 0.0;
  for (double v : x) p += v * v;
  p /= std::max<std::size_t>(x.size(), 1);
  if (p <= 0.0) return;
  const double g = rms / std::sqrt(p);
  for (double& v : x) v *= g;
}

constexpr int kScale[] = {0, 2, 4, 5, 7, 9, 11};

double scale_note(std::mt19937_64& rng, int low, int high) {
  std::uniform_int_distribution<int> pick(low, high);
  int n = pick(rng);
  while (std::find(std::begin(kScale), std::end(kScale), ((n % 12) + 12) % 12) == std::end(kScale)) ++n;
  return n;
}

void piano_line(std::vector<double>& out, double seconds, std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Voice v{power_law(10, 1.2), 0.004, 0.08, 0.5};
  for (double t = 0.0; t < seconds; t += 0.2 + 0.35 * u(rng)) {
    render_note(out, t, 0.4, midi_hz(scale_note(rng, 60, 84)), amp * (0.6 + 0.4 * u(rng)), v, kTwoPi * u(rng));
  }
  Voice bass{power_law(8, 1.0), 0.004, 0.1, 0.9};
  for (double t = 0.0; t < seconds; t += 0.8 + 0.4 * u(rng)) {
    render_note(out, t, 0.8, midi_hz(scale_note(rng, 36, 52)), amp * 0.7, bass, kTwoPi * u(rng));
  }
}

}  // namespace

dsp::AudioBuffer synth_music(Subgenre genre, double seconds, std::uint64_t seed, double rms) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> out(dsp::seconds_to_samples(seconds), 0.0);

  switch (genre) {
    case Subgenre::Piano:
      piano_line(out, seconds, rng, 1.0);
      break;
    case Subgenre::Strings: {
      Voice v{power_law(12, 1.0), 0.15, 0.2, 0.0, 5.5, 0.003};
      for (double t = 0.0; t < seconds;) {
        const double dur = 1.0 + 1.5 * u(rng);
        const double root = scale_note(rng, 48, 67);
        for (double step : {0.0, 4.0, 7.0}) {
          render_note(out, t, dur, midi_hz(root + step) * (1.0 + 0.002 * (u(rng) - 0.5)), 0.5, v,
                      kTwoPi * u(rng));
        }
        t += dur;
      }
      break;
    }
    case Subgenre::Orchestral: {
      Voice strings{power_law(12, 1.0), 0.08, 0.15, 0.0, 5.0, 0.002};
      Voice winds{power_law(9, 1.0, true), 0.05, 0.1};
      Voice timpani{{1.0, 0.3}, 0.002, 0.2, 0.4};
      for (double t = 0.0; t < seconds;) {
        const double dur = 0.6 + 0.9 * u(rng);
        const double root = scale_note(rng, 45, 60);
        int i = 0;
        for (double step : {0.0, 7.0, 12.0, 16.0}) {
          render_note(out, t, dur, midi_hz(root + step), 0.4, (i++ % 2) ? winds : strings, kTwoPi * u(rng));
        }
        if (u(rng) < 0.3) render_note(out, t, 0.3, 60.0 + 30.0 * u(rng), 0.8, timpani, 0.0);
        t += dur;
      }
      break;
    }
    case Subgenre::Opera: {
      for (double t = 0.0; t < seconds;) {
        const double dur = 0.4 + 0.6 * u(rng);
        const double f0 = midi_hz(scale_note(rng, 60, 79));
        Voice voice{formant_harmonics(f0, 25), 0.04, 0.06, 0.0, 6.0, 0.015};
        render_note(out, t, dur + 0.03, f0, 1.0, voice, kTwoPi * u(rng));
        t += dur;
      }
      piano_line(out, seconds, rng, 0.3);
      break;
    }
  }
  normalize_rms(out, rms);
  return dsp::AudioBuffer(std::move(out));
}

dsp::AudioBuffer synth_hiss(double seconds, std::uint64_t seed, double rms) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(dsp::seconds_to_samples(seconds));
  double prev = 0.0;
  for (double& v : out) {
    const double x = g(rng);
    v = x - 0.3 * prev;
    prev = x;
  }
  normalize_rms(out, rms);
  return dsp::AudioBuffer(std::move(out));
}

dsp::AudioBuffer synth_surface_noise(double seconds, std::uint64_t seed,
                                     const SurfaceNoiseOptions& o) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const double sr = dsp::kSampleRate;
  const std::size_t n = dsp::seconds_to_samples(seconds);

  std::vector<double> hiss = synth_hiss(seconds, rng(), o.hiss_rms).samples;
  const double rev_phase = u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    hiss[i] *= 1.0 + 0.15 * std::sin(kTwoPi * (i / sr / o.revolution_seconds + rev_phase));
  }

  // Two cascaded one-pole low-passes at 30 Hz.
  std::vector<double> rumble(n);
  const double a = std::exp(-kTwoPi * 30.0 / sr);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s1 = (1.0 - a) * g(rng) + a * s1;
    s2 = (1.0 - a) * s1 + a * s2;
    rumble[i] = s2;
  }
  normalize_rms(rumble, o.rumble_rms);

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = hiss[i] + rumble[i];

  const auto click = [&](std::size_t at, double peak, double tau) {
    const std::size_t len = static_cast<std::size_t>(6 * tau);
    for (std::size_t j = 0; j < len && at + j < n; ++j) {
      out[at + j] += peak * std::exp(-static_cast<double>(j) / tau) * std::cos(std::numbers::pi * j / 3.0);
    }
  };
  std::poisson_distribution<int> count(o.crackle_per_second * seconds);
  for (int k = count(rng); k > 0; --k) {
    const std::size_t at = static_cast<std::size_t>(u(rng) * n);
    const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
    click(at, sign * o.crackle_peak * (0.3 + 0.7 * u(rng)), 2.0 + 3.0 * u(rng));
  }
  for (double t = rev_phase * o.revolution_seconds; t < seconds; t += o.revolution_seconds) {
    click(static_cast<std::size_t>(t * sr), o.scratch_peak * (0.8 + 0.2 * u(rng)), 6.0);
  }
  return dsp::AudioBuffer(std::move(out));
}

Manifest write_synthetic_corpus(const std::filesystem::path& dir, const CorpusOptions& o) {
  std::filesystem::create_directories(dir / "clean");
  std::filesystem::create_directories(dir / "noise");
  std::mt19937_64 rng(o.seed);
  Manifest m;
  m.base_dir = dir;
  for (Subgenre genre : kAllSubgenres) {
    for (std::size_t i = 0; i < o.clean_per_genre; ++i) {
      const auto file = dir / "clean" / (std::string(to_string(genre)) + "_" + std::to_string(i) + ".wav");
      dsp::write_wav(file, synth_music(genre, o.clean_seconds, rng()));
      m.entries.push_back(describe_file(file, dir, Role::Clean, genre));
    }
  }
  for (std::size_t i = 0; i < o.noise_files; ++i) {
    const auto file = dir / "noise" / ("surface_" + std::to_string(i) + ".wav");
    dsp::write_wav(file, synth_surface_noise(o.noise_seconds, rng()));
    m.entries.push_back(describe_file(file, dir, Role::Noise));
  }
  write_manifest(dir / "manifest.tsv", m);
  return m;
}

}  // namespace phr::data
