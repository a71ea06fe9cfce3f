#include "phr/harness/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>

#include "phr/baseline/ar.hpp"
#include "phr/common/error.hpp"
#include "phr/harness/metrics.hpp"
#include "phr/model/checkpoint.hpp"
#include "phr/model/denoise.hpp"

namespace phr::harness {
namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string genre_label(const std::optional<data::Subgenre>& g) {
  return g ? std::string(data::to_string(*g)) : "all";
}

}  // namespace

TestSet build_test_set(const data::Manifest& manifest, std::size_t per_genre,
                       const std::vector<double>& snrs_db, std::uint64_t seed) {
  TestSet set;
  const auto noise = manifest.with_role(data::Role::Noise);
  if (noise.empty()) throw FormatError("manifest has no noise entries");
  std::vector<data::Subgenre> genres;
  for (data::Subgenre g : data::kAllSubgenres) {
    if (manifest.clean_of(g).empty()) {
      set.warnings.push_back("no clean files for subgenre " + std::string(data::to_string(g)) +
                             "; test set built without it");
    } else {
      genres.push_back(g);
    }
  }
  if (genres.empty()) throw FormatError("manifest has no clean entries with a subgenre");

  std::mt19937_64 rng(seed);
  for (double snr : snrs_db) {
    for (data::Subgenre g : genres) {
      const auto clean = manifest.clean_of(g);
      for (std::size_t i = 0; i < per_genre; ++i) {
        TestItem item;
        item.genre = g;
        item.recipe.clean_ref =
            clean[std::uniform_int_distribution<std::size_t>(0, clean.size() - 1)(rng)]->path;
        item.recipe.noise_ref =
            noise[std::uniform_int_distribution<std::size_t>(0, noise.size() - 1)(rng)]->path;
        item.recipe.snr_db = snr;
        item.recipe.level_db =
            std::uniform_real_distribution<double>(data::kLevelMinDb, data::kLevelMaxDb)(rng);
        item.recipe.seed = rng();
        set.items.push_back(std::move(item));
      }
    }
  }
  return set;
}

Method identity_method() {
  return {"identity", [](const data::Mixture& m) { return m.noisy; }, true};
}

Method oracle_method() {
  return {"oracle", [](const data::Mixture& m) { return m.target; }, true};
}

Method lsa_method() {
  return {"lsa", [](const data::Mixture& m) {
            dsp::AudioBuffer ref = m.noise;
            for (double& v : ref.samples) v *= m.alpha * m.beta;
            return baseline::lsa_c(m.noisy, ref);
          },
          true};
}

Method model_method(const std::string& checkpoint) {
  auto model = std::make_shared<const model::TwoStageModel>(model::load_model(checkpoint));
  return {"model:" + checkpoint,
          [model](const data::Mixture& m) { return model::denoise_file(m.noisy, *model); }};
}

Method parse_method(std::string_view token) {
  if (token == "identity") return identity_method();
  if (token == "oracle") return oracle_method();
  if (token == "lsa") return lsa_method();
  if (token.starts_with("model:") && token.size() > 6) {
    return model_method(std::string(token.substr(6)));
  }
  throw FormatError("unknown method '" + std::string(token) +
                    "' (expected identity, oracle, lsa or model:<checkpoint>)");
}

std::vector<Method> parse_methods(std::string_view list) {
  std::vector<Method> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    const std::string_view tok = list.substr(start, comma - start);
    if (tok.empty()) throw FormatError("empty method in list '" + std::string(list) + "'");
    out.push_back(parse_method(tok));
    start = comma + 1;
  }
  return out;
}

const ReportCell& EvalReport::cell(double snr, std::string_view method,
                                   std::optional<data::Subgenre> genre) const {
  for (const ReportCell& c : cells) {
    if (c.snr_db == snr && c.method == method && c.genre == genre) return c;
  }
  throw std::out_of_range("EvalReport::cell: no such row");
}

EvalReport evaluate(const std::vector<Method>& methods, const TestSet& test_set,
                    const data::Manifest& manifest, const data::MixOptions& mix,
                    const std::function<void(std::size_t, std::size_t)>& progress) {
  EvalReport report;
  report.warnings = test_set.warnings;
  report.examples = test_set.items.size();
  for (const Method& m : methods) report.methods.push_back(m.name);
  for (const TestItem& item : test_set.items) {
    if (std::find(report.conditions.begin(), report.conditions.end(), item.recipe.snr_db) ==
        report.conditions.end()) {
      report.conditions.push_back(item.recipe.snr_db);
    }
  }

  // Load every referenced file once, up front; the cache is read-only after.
  std::map<std::string, dsp::AudioBuffer> audio;
  for (const TestItem& item : test_set.items) {
    for (const std::string* ref : {&item.recipe.clean_ref, &item.recipe.noise_ref}) {
      if (!audio.contains(*ref)) audio.emplace(*ref, data::load_entry(manifest, manifest.find(*ref)));
    }
  }
  const std::size_t n = test_set.items.size();
  std::vector<data::Mixture> mixtures(n);
  for (std::size_t i = 0; i < n; ++i) {
    const data::MixtureRecipe& r = test_set.items[i].recipe;
    mixtures[i] = data::make_mixture(r, audio.at(r.clean_ref), audio.at(r.noise_ref), mix);
  }

  struct Outcome {
    bool ok = false;
    double dsnr = 0.0, lsd = 0.0;
    std::string error;
  };
  std::vector<std::vector<Outcome>> outcomes(methods.size(), std::vector<Outcome>(n));
  const auto run_one = [&](std::size_t m, std::size_t i) {
    Outcome& o = outcomes[m][i];
    try {
      const dsp::AudioBuffer out = methods[m].run(mixtures[i]);
      if (out.size() != mixtures[i].noisy.size()) throw NumericalError("output length changed");
      if (!out.all_finite()) throw NumericalError("non-finite output");
      o.dsnr = delta_snr(mixtures[i].target, mixtures[i].noisy, out);
      o.lsd = log_spectral_distance(mixtures[i].target, out);
      o.ok = true;
    } catch (const std::exception& e) {
      o.error = e.what();
    }
  };
  std::size_t done = 0;
  const std::size_t total = n * methods.size();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    if (methods[m].concurrent) {
#pragma omp parallel for schedule(dynamic)
      for (std::size_t i = 0; i < n; ++i) run_one(m, i);
      done += n;
      if (progress) progress(done, total);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        run_one(m, i);
        if (progress) progress(++done, total);
      }
    }
  }

  struct Sums {
    std::size_t count = 0, missing = 0;
    double dsnr = 0.0, lsd = 0.0;
  };
  // key: condition index, method index, genre index (4 = all)
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Sums> sums;
  for (std::size_t i = 0; i < n; ++i) {
    const TestItem& item = test_set.items[i];
    const std::size_t c = static_cast<std::size_t>(
        std::find(report.conditions.begin(), report.conditions.end(), item.recipe.snr_db) -
        report.conditions.begin());
    const auto g = static_cast<std::size_t>(item.genre);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const Outcome& o = outcomes[m][i];
      for (Sums* s : {&sums[{c, m, 4}], &sums[{c, m, g}]}) {
        if (o.ok) {
          ++s->count;
          s->dsnr += o.dsnr;
          s->lsd += o.lsd;
        } else {
          ++s->missing;
        }
      }
      if (!o.ok) report.missing.push_back({methods[m].name, item.recipe, o.error});
    }
  }

  for (std::size_t c = 0; c < report.conditions.size(); ++c) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      for (std::size_t g = 0; g <= 4; ++g) {
        const auto it = sums.find({c, m, g});
        if (it == sums.end()) continue;
        const Sums& s = it->second;
        ReportCell cell;
        cell.snr_db = report.conditions[c];
        cell.method = methods[m].name;
        if (g < 4) cell.genre = data::kAllSubgenres[g];
        cell.count = s.count;
        cell.missing = s.missing;
        if (s.count > 0) {
          cell.mean_delta_snr = s.dsnr / static_cast<double>(s.count);
          cell.mean_lsd = s.lsd / static_cast<double>(s.count);
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

std::string format_report_tsv(const EvalReport& r) {
  std::string out = "snr_db\tmethod\tsubgenre\tcount\tmissing\tdelta_snr_db\tlsd_db\n";
  for (const ReportCell& c : r.cells) {
    out += fmt("%g", c.snr_db) + '\t' + c.method + '\t' + genre_label(c.genre) + '\t' +
           std::to_string(c.count) + '\t' + std::to_string(c.missing) + '\t' +
           (c.count ? fmt("%.4f", c.mean_delta_snr) : "nan") + '\t' +
           (c.count ? fmt("%.4f", c.mean_lsd) : "nan") + '\n';
  }
  for (const MissingResult& m : r.missing) {
    out += "#missing\t" + m.method + '\t' + m.recipe.clean_ref + '\t' + m.recipe.noise_ref + '\t' +
           fmt("%g", m.recipe.snr_db) + '\t' + std::to_string(m.recipe.seed) + '\t' + m.error + '\n';
  }
  return out;
}

std::string format_report_table(const EvalReport& r) {
  std::size_t name_w = 8;
  for (const std::string& m : r.methods) name_w = std::max(name_w, m.size());
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
  };

  std::string out = std::string(name_w, ' ');
  for (double c : r.conditions) {
    out += pad("dSNR@" + fmt("%g", c) + "dB", 14) + pad("LSD@" + fmt("%g", c) + "dB", 14);
  }
  out += '\n';
  // Best per column: highest dSNR, lowest LSD.
  std::vector<std::pair<double, double>> best(r.conditions.size(), {-1e300, 1e300});
  for (const ReportCell& c : r.cells) {
    if (c.genre || c.count == 0) continue;
    const std::size_t i = static_cast<std::size_t>(
        std::find(r.conditions.begin(), r.conditions.end(), c.snr_db) - r.conditions.begin());
    best[i].first = std::max(best[i].first, c.mean_delta_snr);
    best[i].second = std::min(best[i].second, c.mean_lsd);
  }
  for (const std::string& m : r.methods) {
    std::string line = m + std::string(name_w - m.size(), ' ');
    for (std::size_t i = 0; i < r.conditions.size(); ++i) {
      const ReportCell& c = r.cell(r.conditions[i], m);
      if (c.count == 0) {
        line += pad("-", 14) + pad("-", 14);
        continue;
      }
      line += pad(fmt("%.2f", c.mean_delta_snr) + (c.mean_delta_snr == best[i].first ? "*" : " "), 14);
      line += pad(fmt("%.2f", c.mean_lsd) + (c.mean_lsd == best[i].second ? "*" : " "), 14);
    }
    out += line + '\n';
  }
  out += "\n* best in column. dSNR in dB (higher is better). LSD is log-spectral distance in dB\n"
         "(lower is better); it stands in for the perceptual metrics and is not comparable\n"
         "to published numbers.\n";

  out += "\nPer-subgenre dSNR (dB)\n";
  for (double cond : r.conditions) {
    out += "  SNR " + fmt("%g", cond) + " dB\n";
    for (const std::string& m : r.methods) {
      std::string line = "    " + m + std::string(name_w - m.size(), ' ');
      for (data::Subgenre g : data::kAllSubgenres) {
        const auto it = std::find_if(r.cells.begin(), r.cells.end(), [&](const ReportCell& c) {
          return c.snr_db == cond && c.method == m && c.genre == g;
        });
        if (it == r.cells.end()) continue;
        line += "  " + std::string(data::to_string(g)) + " " +
                (it->count ? fmt("%.2f", it->mean_delta_snr) : std::string("-")) + " (n=" +
                std::to_string(it->count) + ")";
      }
      out += line + '\n';
    }
  }
  out += "\nExamples: " + std::to_string(r.examples) + '\n';
  if (!r.missing.empty()) {
    out += "Missing results: " + std::to_string(r.missing.size()) +
           " (excluded from means; listed in the TSV)\n";
  }
  for (const std::string& w : r.warnings) out += "warning: " + w + '\n';
  return out;
}

}  // namespace phr::harness
