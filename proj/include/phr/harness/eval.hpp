#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phr/data/manifest.hpp"
#include "phr/data/mixture.hpp"
#include "phr/dsp/audio.hpp"

namespace phr::harness {

// 800 five-second mixtures: 100 per subgenre per SNR condition.
inline constexpr std::size_t kFullScalePerGenre = 100;

struct TestItem {
  data::MixtureRecipe recipe;
  data::Subgenre genre = data::Subgenre::Piano;
};

struct TestSet {
  std::vector<TestItem> items;
  std::vector<std::string> warnings;
};

// per_genre recipes for every subgenre present in the manifest, at each of
// `snrs_db` (fixed, not sampled). Clean file, noise file, level and mixing
// seed are drawn from `seed`. Missing subgenres are skipped with a warning.
TestSet build_test_set(const data::Manifest& manifest, std::size_t per_genre,
                       const std::vector<double>& snrs_db, std::uint64_t seed);

struct Method {
  std::string name;
  std::function<dsp::AudioBuffer(const data::Mixture&)> run;
  // false: run one example at a time (the method parallelizes internally or
  // is not safe to call concurrently).
  bool concurrent = false;
};

Method identity_method();
// Returns the clean target; for sanity checks.
Method oracle_method();
// LSA-C, given the mixture's own scaled noise track as noise reference.
Method lsa_method();
// Two-stage model from a checkpoint (loaded once).
Method model_method(const std::string& checkpoint);

// "identity", "oracle", "lsa" or "model:<checkpoint>". FormatError otherwise.
Method parse_method(std::string_view token);
std::vector<Method> parse_methods(std::string_view comma_list);

struct ReportCell {
  double snr_db = 0.0;
  std::string method;
  std::optional<data::Subgenre> genre;  // nullopt = all subgenres
  std::size_t count = 0;                // examples in the mean
  std::size_t missing = 0;              // examples the method failed on
  double mean_delta_snr = 0.0;
  double mean_lsd = 0.0;
};

struct MissingResult {
  std::string method;
  data::MixtureRecipe recipe;
  std::string error;
};

struct EvalReport {
  std::vector<double> conditions;
  std::vector<std::string> methods;
  std::vector<ReportCell> cells;
  std::vector<MissingResult> missing;
  std::vector<std::string> warnings;
  std::size_t examples = 0;

  const ReportCell& cell(double snr_db, std::string_view method,
                         std::optional<data::Subgenre> genre = std::nullopt) const;
};

// Runs every method on every mixture of the test set. Concurrent methods
// spread examples over threads; per-example results are reduced in test-set
// order, so the report does not depend on scheduling.
EvalReport evaluate(const std::vector<Method>& methods, const TestSet& test_set,
                    const data::Manifest& manifest, const data::MixOptions& mix = {},
                    const std::function<void(std::size_t, std::size_t)>& progress = {});

// Tab-separated, one row per (condition, method, subgenre or "all"), then
// '#'-prefixed rows for missing results.
std::string format_report_tsv(const EvalReport& report);
// Human-readable table: one row per method, dSNR and LSD columns per
// condition, best value of each column marked.
std::string format_report_table(const EvalReport& report);

}  // namespace phr::harness
