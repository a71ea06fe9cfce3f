#include "phr/data/mixture.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "phr/common/error.hpp"
#include "phr/data/noise.hpp"

namespace phr::data {
namespace {

std::size_t random_offset(std::mt19937_64& rng, std::size_t available, std::size_t needed) {
  if (available <= needed) return 0;
  std::uniform_int_distribution<std::size_t> pick(0, available - needed);
  return pick(rng);
}

template <typename T>
T parse_number(std::string_view s, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("recipe line " + std::to_string(line_no) + ": bad number '" +
                      std::string(s) + "'");
  }
  return v;
}

}  // namespace

double alpha_for_snr(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& noise, double snr_db) {
  if (clean.size() != noise.size()) throw std::invalid_argument("alpha_for_snr: length mismatch");
  const double pn = noise.power();
  if (!(pn > 0.0)) throw std::invalid_argument("alpha_for_snr: noise has zero power");
  return std::sqrt(clean.power() / pn) * std::pow(10.0, -snr_db / 20.0);
}

double level_gain(double level_db) { return std::pow(10.0, level_db / 20.0); }

Mixture make_mixture(const MixtureRecipe& recipe, const dsp::AudioBuffer& clean_source,
                     const dsp::AudioBuffer& noise_source, const MixOptions& options) {
  const std::size_t n = dsp::seconds_to_samples(options.seconds, clean_source.sample_rate);
  if (clean_source.size() < n) {
    throw FormatError("clean source '" + recipe.clean_ref + "' is shorter than " +
                      std::to_string(options.seconds) + " s");
  }
  std::mt19937_64 rng(recipe.seed);
  Mixture m;
  m.clean = clean_source.slice(random_offset(rng, clean_source.size(), n), n);
  const std::size_t noise_at = random_offset(rng, noise_source.size(), n);
  if (noise_source.size() - noise_at >= n) {
    m.noise = noise_source.slice(noise_at, n);
  } else {
    m.noise = extend_noise(noise_source, n, options.crossfade_seconds).audio;
  }

  m.alpha = alpha_for_snr(m.clean, m.noise, recipe.snr_db);
  m.beta = level_gain(recipe.level_db);
  m.noisy = dsp::AudioBuffer::zeros(n);
  m.target = dsp::AudioBuffer::zeros(n);
  for (std::size_t i = 0; i < n; ++i) {
    // fma keeps Y + alpha N to one rounding even under cancellation.
    m.noisy.samples[i] = m.beta * std::fma(m.alpha, m.noise.samples[i], m.clean.samples[i]);
    m.target.samples[i] = m.beta * m.clean.samples[i];
    m.clipped = m.clipped || std::abs(m.noisy.samples[i]) > 1.0;
  }
  return m;
}

Mixture make_mixture(const MixtureRecipe& recipe, const Manifest& manifest,
                     const MixOptions& options) {
  const ManifestEntry& clean = manifest.find(recipe.clean_ref);
  const ManifestEntry& noise = manifest.find(recipe.noise_ref);
  if (clean.role != Role::Clean) throw FormatError(recipe.clean_ref + " is not a clean entry");
  if (noise.role != Role::Noise) throw FormatError(recipe.noise_ref + " is not a noise entry");
  return make_mixture(recipe, load_entry(manifest, clean), load_entry(manifest, noise), options);
}

MixtureRecipe sample_recipe(std::mt19937_64& rng, const Manifest& manifest) {
  const auto clean = manifest.with_role(Role::Clean);
  const auto noise = manifest.with_role(Role::Noise);
  if (clean.empty() || noise.empty()) {
    throw std::invalid_argument("sample_recipe: manifest needs clean and noise entries");
  }
  MixtureRecipe r;
  r.clean_ref = clean[std::uniform_int_distribution<std::size_t>(0, clean.size() - 1)(rng)]->path;
  r.noise_ref = noise[std::uniform_int_distribution<std::size_t>(0, noise.size() - 1)(rng)]->path;
  r.snr_db = std::uniform_real_distribution<double>(kSnrMinDb, kSnrMaxDb)(rng);
  r.level_db = std::uniform_real_distribution<double>(kLevelMinDb, kLevelMaxDb)(rng);
  r.seed = rng();
  return r;
}

std::string format_recipes(const RecipeList& list) {
  std::string out = "#manifest=" + list.manifest + "\n";
  char nums[96];
  for (const auto& r : list.recipes) {
    std::snprintf(nums, sizeof nums, "%.17g\t%.17g\t%llu", r.snr_db, r.level_db,
                  static_cast<unsigned long long>(r.seed));
    out += r.clean_ref + '\t' + r.noise_ref + '\t' + nums + '\n';
  }
  return out;
}

RecipeList parse_recipes(std::string_view text) {
  RecipeList list;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.starts_with("#manifest=")) {
      list.manifest = std::string(line.substr(10));
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> f;
    std::size_t p = 0;
    while (true) {
      const std::size_t tab = line.find('\t', p);
      f.push_back(line.substr(p, tab == std::string_view::npos ? tab : tab - p));
      if (tab == std::string_view::npos) break;
      p = tab + 1;
    }
    if (f.size() != 5) {
      throw FormatError("recipe line " + std::to_string(line_no) + ": expected 5 fields");
    }
    MixtureRecipe r;
    r.clean_ref = std::string(f[0]);
    r.noise_ref = std::string(f[1]);
    r.snr_db = parse_number<double>(f[2], line_no);
    r.level_db = parse_number<double>(f[3], line_no);
    r.seed = parse_number<std::uint64_t>(f[4], line_no);
    list.recipes.push_back(std::move(r));
  }
  return list;
}

RecipeList read_recipes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_recipes(text);
}

void write_recipes(const std::filesystem::path& path, const RecipeList& list) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::string text = format_recipes(list);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace phr::data
