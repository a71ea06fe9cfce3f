// phr: command-line front end for the denoiser, the LSA-C baseline, the data
// pipeline and the evaluation harness.
//
// Exit codes: 0 ok, 1 usage, 2 data/format error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phr/baseline/ar.hpp"
#include "phr/common/config.hpp"
#include "phr/common/error.hpp"
#include "phr/data/manifest.hpp"
#include "phr/data/mixture.hpp"
#include "phr/data/noise.hpp"
#include "phr/data/synthetic.hpp"
#include "phr/dsp/stft.hpp"
#include "phr/dsp/wav.hpp"
#include "phr/harness/eval.hpp"
#include "phr/harness/metrics.hpp"
#include "phr/harness/pgm.hpp"
#include "phr/model/checkpoint.hpp"
#include "phr/model/denoise.hpp"
#include "phr/model/trainer.hpp"
#include "phr/numerics/gradcheck.hpp"

namespace fs = std::filesystem;
using namespace phr;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void dump_spec(const std::string& path, const dsp::AudioBuffer& audio) {
  if (path.empty()) return;
  harness::write_spectrogram_pgm(path, dsp::stft_full(audio).spec);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw FormatError("cannot write " + p.string());
}

std::vector<double> parse_snrs(const std::string& list) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    out.push_back(parse_double(list.substr(start, comma - start), "--snr"));
    start = comma + 1;
  }
  return out;
}

// --- subcommands ---------------------------------------------------------

struct DenoiseArgs {
  std::string in, out, ckpt, residual, dump;
};

int cmd_denoise(const DenoiseArgs& a) {
  const dsp::AudioBuffer noisy = dsp::read_wav(a.in);
  const dsp::AudioBuffer den = model::denoise_file(noisy, fs::path(a.ckpt));
  if (!den.all_finite()) throw NumericalError("model produced non-finite samples");
  dsp::write_wav(a.out, den);
  if (!a.residual.empty()) dsp::write_wav(a.residual, harness::residual_noise(noisy, den));
  dump_spec(a.dump, den);
  return 0;
}

struct LsaArgs {
  std::string in, out, noise_ref, dump;
};

int cmd_lsa(const LsaArgs& a) {
  const dsp::AudioBuffer noisy = dsp::read_wav(a.in);
  std::optional<dsp::AudioBuffer> ref;
  if (!a.noise_ref.empty()) ref = dsp::read_wav(a.noise_ref);
  const dsp::AudioBuffer den = baseline::lsa_c(noisy, ref);
  dsp::write_wav(a.out, den);
  dump_spec(a.dump, den);
  return 0;
}

struct TrainArgs {
  std::string manifest, config, out_dir, resume;
};

int cmd_train(const TrainArgs& a) {
  const model::TrainConfig cfg = model::read_train_config(a.config);
  data::Manifest m = data::read_manifest(a.manifest);
  model::Trainer trainer(cfg, model::manifest_source(std::move(m), cfg.seed, cfg.example_seconds));
  if (!a.resume.empty()) trainer.resume(a.resume);
  fs::create_directories(a.out_dir);
  trainer.run(a.out_dir);
  std::printf("trained to step %llu; %s\n", static_cast<unsigned long long>(trainer.completed_steps()),
              (fs::path(a.out_dir) / "final.phr").string().c_str());
  return 0;
}

struct MixArgs {
  std::string manifest, recipe_out, recipes, out_dir;
  std::size_t count = 0;
  std::uint64_t seed = 1;
  double seconds = 5.0;
};

int cmd_mix(const MixArgs& a) {
  if (!a.manifest.empty()) {
    if (a.recipe_out.empty() || a.count == 0 || !a.recipes.empty() || !a.out_dir.empty())
      throw UsageError("mix: use either --manifest --recipe-out --count [--seed] or --recipes --out-dir");
    const data::Manifest m = data::read_manifest(a.manifest);
    std::mt19937_64 rng(a.seed);
    data::RecipeList list;
    // Stored relative to the recipe file so the pair can be moved together.
    const fs::path recipe_dir = fs::absolute(a.recipe_out).parent_path();
    list.manifest = fs::relative(fs::absolute(a.manifest), recipe_dir).generic_string();
    for (std::size_t i = 0; i < a.count; ++i) list.recipes.push_back(data::sample_recipe(rng, m));
    data::write_recipes(a.recipe_out, list);
    return 0;
  }
  if (a.recipes.empty() || a.out_dir.empty())
    throw UsageError("mix: use either --manifest --recipe-out --count [--seed] or --recipes --out-dir");
  const data::RecipeList list = data::read_recipes(a.recipes);
  fs::path manifest_path = list.manifest;
  if (manifest_path.is_relative()) manifest_path = fs::absolute(a.recipes).parent_path() / manifest_path;
  const data::Manifest m = data::read_manifest(manifest_path);
  fs::create_directories(a.out_dir);
  data::MixOptions opt;
  opt.seconds = a.seconds;
  for (std::size_t i = 0; i < list.recipes.size(); ++i) {
    const data::Mixture x = data::make_mixture(list.recipes[i], m, opt);
    char stem[32];
    std::snprintf(stem, sizeof stem, "mix_%05zu", i);
    const fs::path base = fs::path(a.out_dir) / stem;
    dsp::AudioBuffer noise = x.noise;
    for (double& v : noise.samples) v *= x.alpha * x.beta;
    dsp::write_wav(base.string() + "_noisy.wav", x.noisy);
    dsp::write_wav(base.string() + "_target.wav", x.target);
    dsp::write_wav(base.string() + "_noise.wav", noise);
    if (x.clipped) std::fprintf(stderr, "warning: %s_noisy.wav exceeds full scale\n", stem);
  }
  return 0;
}

struct ExtractArgs {
  std::string in, manifest_out;
};

int cmd_extract_noise(const ExtractArgs& a) {
  const dsp::AudioBuffer audio = dsp::read_wav(a.in);
  const std::string stem = fs::path(a.in).stem().string();
  const auto segments = data::extract_noise_segments(audio, stem);
  const fs::path dir = fs::absolute(a.manifest_out).parent_path();
  fs::create_directories(dir);
  data::Manifest m;
  m.base_dir = dir;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const fs::path file = dir / (stem + "_noise_" + std::to_string(i) + ".wav");
    dsp::write_wav(file, segments[i].audio);
    data::ManifestEntry e = data::describe_file(file, dir, data::Role::Noise);
    e.needs_review = true;
    m.entries.push_back(std::move(e));
    std::printf("%s\t%.3f\t%.3f\n", file.filename().string().c_str(), segments[i].start, segments[i].end);
  }
  data::write_manifest(a.manifest_out, m);
  if (segments.empty()) std::fprintf(stderr, "warning: no noise-only segments found in %s\n", a.in.c_str());
  return 0;
}

struct EvalArgs {
  std::string manifest, methods = "identity,lsa", snr = "3,10", report;
  std::size_t per_genre = harness::kFullScalePerGenre;
  std::uint64_t seed = 1;
  double seconds = 5.0;
};

int cmd_eval(const EvalArgs& a) {
  const data::Manifest m = data::read_manifest(a.manifest);
  const auto methods = harness::parse_methods(a.methods);
  const harness::TestSet set = harness::build_test_set(m, a.per_genre, parse_snrs(a.snr), a.seed);
  for (const std::string& w : set.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  data::MixOptions opt;
  opt.seconds = a.seconds;
  const harness::EvalReport r = harness::evaluate(methods, set, m, opt, [](std::size_t i, std::size_t n) {
    std::fprintf(stderr, "\r%zu/%zu", i, n);
    if (i == n) std::fputc('\n', stderr);
  });
  if (!a.report.empty()) write_text(a.report, harness::format_report_tsv(r));
  std::fputs(harness::format_report_table(r).c_str(), stdout);
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const nn::OpCheck& c : nn::run_gradcheck_suite()) {
    std::printf("%-24s %s  cases=%zu  worst=%.3e  (%s)\n", c.op.c_str(), c.passed() ? "ok  " : "FAIL",
                c.cases, c.worst_error, c.worst_case.c_str());
    ok = ok && c.passed();
  }
  return ok ? 0 : kExitNumerical;
}

struct SynthArgs {
  std::string out_dir;
  data::CorpusOptions corpus;
};

int cmd_synth_corpus(const SynthArgs& a) {
  const data::Manifest m = data::write_synthetic_corpus(a.out_dir, a.corpus);
  std::printf("%zu files; %s\n", m.entries.size(), (fs::path(a.out_dir) / "manifest.tsv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Denoising for historical music recordings"};
  app.require_subcommand(1);

  DenoiseArgs den;
  auto* c_den = app.add_subcommand("denoise", "Denoise a WAV file with a trained model");
  c_den->add_option("--in", den.in, "Noisy input WAV")->required();
  c_den->add_option("--out", den.out, "Denoised output WAV")->required();
  c_den->add_option("--ckpt", den.ckpt, "Model checkpoint")->required();
  c_den->add_option("--residual", den.residual, "Also write noisy - denoised here");
  c_den->add_option("--dump-spec", den.dump, "Write the output spectrogram as PGM");

  LsaArgs lsa;
  auto* c_lsa = app.add_subcommand("lsa", "Declick and LSA-denoise a WAV file (classical baseline)");
  c_lsa->add_option("--in", lsa.in, "Noisy input WAV")->required();
  c_lsa->add_option("--out", lsa.out, "Denoised output WAV")->required();
  c_lsa->add_option("--noise-ref", lsa.noise_ref, "Noise-only WAV for the noise PSD (default: quietest frames)");
  c_lsa->add_option("--dump-spec", lsa.dump, "Write the output spectrogram as PGM");

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the two-stage model");
  c_tr->add_option("--manifest", tr.manifest, "Corpus manifest")->required();
  c_tr->add_option("--config", tr.config, "key = value training config")->required();
  c_tr->add_option("--out-dir", tr.out_dir, "Log and checkpoint directory")->required();
  c_tr->add_option("--resume", tr.resume, "Continue from this checkpoint");

  MixArgs mix;
  auto* c_mix = app.add_subcommand("mix", "Sample mixture recipes, or render recipes to WAV");
  c_mix->add_option("--manifest", mix.manifest, "Corpus manifest (sampling form)");
  c_mix->add_option("--recipe-out", mix.recipe_out, "Recipe list to write (sampling form)");
  c_mix->add_option("--count", mix.count, "Number of recipes (sampling form)");
  c_mix->add_option("--seed", mix.seed, "Sampling seed")->capture_default_str();
  c_mix->add_option("--recipes", mix.recipes, "Recipe list to render (render form)");
  c_mix->add_option("--out-dir", mix.out_dir, "Output directory (render form)");
  c_mix->add_option("--seconds", mix.seconds, "Mixture length")->capture_default_str();

  ExtractArgs ex;
  auto* c_ex = app.add_subcommand("extract-noise", "Cut noise-only segments out of a recording");
  c_ex->add_option("--in", ex.in, "Recording WAV")->required();
  c_ex->add_option("--manifest-out", ex.manifest_out, "Manifest of the extracted segments")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Objective evaluation on a balanced test set");
  c_ev->add_option("--manifest", ev.manifest, "Corpus manifest")->required();
  c_ev->add_option("--methods", ev.methods, "identity, oracle, lsa, model:<ckpt>")->capture_default_str();
  c_ev->add_option("--snr", ev.snr, "Input SNR conditions in dB")->capture_default_str();
  c_ev->add_option("--per-genre", ev.per_genre, "Mixtures per subgenre per condition")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "Test-set seed")->capture_default_str();
  c_ev->add_option("--seconds", ev.seconds, "Mixture length")->capture_default_str();
  c_ev->add_option("--report", ev.report, "Tab-separated report");

  app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");

  SynthArgs syn;
  auto* c_syn = app.add_subcommand("synth-corpus", "Write a small synthetic corpus and manifest");
  c_syn->add_option("--out-dir", syn.out_dir, "Output directory")->required();
  c_syn->add_option("--per-genre", syn.corpus.clean_per_genre, "Clean files per subgenre")->capture_default_str();
  c_syn->add_option("--noise-files", syn.corpus.noise_files, "Surface-noise files")->capture_default_str();
  c_syn->add_option("--clean-seconds", syn.corpus.clean_seconds, "Clean file length")->capture_default_str();
  c_syn->add_option("--noise-seconds", syn.corpus.noise_seconds, "Noise file length")->capture_default_str();
  c_syn->add_option("--seed", syn.corpus.seed, "Synthesis seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "denoise") return cmd_denoise(den);
    if (cmd == "lsa") return cmd_lsa(lsa);
    if (cmd == "train") return cmd_train(tr);
    if (cmd == "mix") return cmd_mix(mix);
    if (cmd == "extract-noise") return cmd_extract_noise(ex);
    if (cmd == "eval") return cmd_eval(ev);
    if (cmd == "gradcheck") return cmd_gradcheck();
    if (cmd == "synth-corpus") return cmd_synth_corpus(syn);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    // Bad files, manifests, checkpoints, configs, and arguments they imply.
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  }
  return kExitUsage;
}
