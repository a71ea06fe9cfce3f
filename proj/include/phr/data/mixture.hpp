#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "phr/data/manifest.hpp"
#include "phr/dsp/audio.hpp"

namespace phr::data {

inline constexpr double kSnrMinDb = 2.0;
inline constexpr double kSnrMaxDb = 20.0;
inline constexpr double kLevelMinDb = -6.0;
inline constexpr double kLevelMaxDb = 4.0;

struct MixtureRecipe {
  std::string clean_ref;
  std::string noise_ref;
  double snr_db = 0.0;
  double level_db = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const MixtureRecipe&) const = default;
};

// sqrt(P_Y / P_N) * 10^(-snr_db / 20), P being mean squared amplitude.
// Throws std::invalid_argument for zero-power noise or unequal lengths.
double alpha_for_snr(const dsp::AudioBuffer& clean, const dsp::AudioBuffer& noise, double snr_db);

double level_gain(double level_db);

struct MixOptions {
  double seconds = 5.0;
  double crossfade_seconds = 0.5;
};

struct Mixture {
  dsp::AudioBuffer noisy;   // X = beta (Y + alpha N)
  dsp::AudioBuffer target;  // beta Y
  dsp::AudioBuffer clean;   // Y, the unscaled crop
  dsp::AudioBuffer noise;   // N, cropped or extended
  double alpha = 0.0;
  double beta = 0.0;
  // Some |X| > 1. The samples are kept as they are.
  bool clipped = false;
};

// Deterministic in the recipe: the crop offsets come from recipe.seed.
// Throws FormatError when a ref is not in the manifest or the clean file is
// shorter than the mixture.
Mixture make_mixture(const MixtureRecipe& recipe, const Manifest& manifest,
                     const MixOptions& options = {});
// Same, from already loaded audio.
Mixture make_mixture(const MixtureRecipe& recipe, const dsp::AudioBuffer& clean_source,
                     const dsp::AudioBuffer& noise_source, const MixOptions& options = {});

// SNR and level uniform in dB over their ranges; refs uniform over the
// manifest's clean and noise entries. Throws std::invalid_argument when
// either role is missing.
MixtureRecipe sample_recipe(std::mt19937_64& rng, const Manifest& manifest);

// Tab-separated recipe list. The first line names the manifest the refs
// belong to ("#manifest=<path>"), then one line per recipe: clean_ref,
// noise_ref, snr_db, level_db, seed. Numbers use %.17g so they read back
// exactly.
struct RecipeList {
  std::string manifest;
  std::vector<MixtureRecipe> recipes;
};

std::string format_recipes(const RecipeList& list);
RecipeList parse_recipes(std::string_view text);
RecipeList read_recipes(const std::filesystem::path& path);
void write_recipes(const std::filesystem::path& path, const RecipeList& list);

}  // namespace phr::data
