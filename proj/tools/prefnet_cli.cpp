// SPDX-License-Identifier: Apache-2.0
// prefnet: convert listening-test ratings, train and evaluate preference models.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "prefnet/audio.hpp"
#include "prefnet/common.hpp"
#include "prefnet/evaluation.hpp"
#include "prefnet/model.hpp"
#include "prefnet/preference.hpp"
#include "prefnet/synthetic.hpp"
#include "prefnet/training.hpp"

#ifndef PREFNET_VERSION
#define PREFNET_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace prefnet;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

constexpr double kGradTolerance = 1e-4;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Record of one invocation, written next to the primary output.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["toolkit_version"] = PREFNET_VERSION;
    j_["started_at"] = utc_now();
    j_["config"] = ordered_json::object();
    j_["inputs"] = ordered_json::object();
    j_["outputs"] = ordered_json::object();
  }

  ordered_json& config() { return j_["config"]; }
  void seed(std::uint64_t s) { j_["seed"] = s; }
  void input(const std::string& key, const fs::path& p) { j_["inputs"][key] = p.string(); }
  void output(const std::string& key, const fs::path& p) { j_["outputs"][key] = p.string(); }
  void result(const std::string& key, ordered_json value) { j_["result"][key] = std::move(value); }

  /// Writes to `path`, or to stderr when `path` is empty.
  void emit(const fs::path& path) {
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start_;
    j_["wall_clock_seconds"] = took.count();
    if (path.empty()) {
      std::cerr << j_.dump(2) << '\n';
      return;
    }
    std::ofstream out(path);
    out << j_.dump(2) << '\n';
    if (!out) throw DataError("cannot write run manifest " + path.string());
  }

 private:
  ordered_json j_;
  std::chrono::steady_clock::time_point start_;
};

fs::path sidecar(const fs::path& out, const std::string& suffix) {
  return fs::path(out.string() + suffix);
}

eval::SystemRule parse_rule(const std::string& s) {
  return s == "majority" ? eval::SystemRule::majority_vote : eval::SystemRule::mean_probability;
}

audio::MelConfig mel_for(const model::ModelSpec& spec) {
  audio::MelConfig cfg;
  cfg.n_mels = static_cast<int>(spec.n_mels);
  return cfg;
}

fs::path audio_root_for(const fs::path& manifest, const std::string& flag) {
  if (!flag.empty()) return flag;
  return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

std::optional<fs::path> cache_dir_for(const std::string& flag) {
  if (flag.empty()) return std::nullopt;
  fs::create_directories(flag);
  return fs::path(flag);
}

/// Audio paths relative to the ratings file, rewritten relative to the manifest.
void rebase_audio_paths(std::vector<data::MushraRecord>& records, const fs::path& ratings,
                        const fs::path& manifest) {
  const fs::path from = fs::absolute(ratings).parent_path();
  const fs::path to = fs::absolute(manifest).parent_path();
  for (auto& r : records) {
    const fs::path p(r.audio_path);
    if (p.is_absolute()) continue;
    r.audio_path = (from / p).lexically_normal().lexically_relative(to).generic_string();
  }
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string ratings, dates, out;
  int folds = 0;
  bool rebase = true;
};

int cmd_convert(const ConvertArgs& a) {
  RunManifest run("convert");
  run.input("ratings", a.ratings);
  if (!a.dates.empty()) run.input("dates", a.dates);
  run.output("manifest", a.out);
  run.config()["folds"] = a.folds;
  run.config()["rebase_audio_paths"] = a.rebase;

  if (a.folds > 0 && a.dates.empty()) throw DataError("--folds requires --dates");
  auto records = data::parse_mushra_csv(a.ratings);
  if (a.rebase) rebase_audio_paths(records, a.ratings, a.out);
  std::vector<std::string> warnings;
  auto pairs = data::build_preference_pairs(records, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';

  std::map<std::string, std::string> dates;
  if (!a.dates.empty()) dates = data::read_dates_csv(a.dates);
  if (a.folds > 0) {
    const auto spec = data::split_folds(pairs, a.folds, dates);
    data::apply_folds(pairs, spec, dates);
  } else if (!dates.empty()) {
    for (auto& p : pairs) {
      const auto it = dates.find(p.evaluation_id);
      if (it != dates.end()) p.eval_date = it->second;
    }
  }
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  data::write_manifest(pairs, a.out);

  struct Counts {
    std::set<std::string> systems, screens;
    std::size_t pairs = 0;
    std::optional<int> fold;
  };
  std::map<std::string, Counts> per_eval;
  for (const auto& r : records) {
    auto& c = per_eval[r.evaluation_id];
    c.systems.insert(r.system_id);
    c.screens.insert(r.screen_id);
  }
  for (const auto& p : pairs) {
    auto& c = per_eval[p.evaluation_id];
    ++c.pairs;
    c.fold = p.fold;
  }
  std::printf("%-16s %8s %8s %8s %6s\n", "evaluation", "systems", "screens", "pairs", "fold");
  std::size_t total_screens = 0;
  std::set<std::string> all_systems;
  for (const auto& [id, c] : per_eval) {
    std::printf("%-16s %8zu %8zu %8zu %6s\n", id.c_str(), c.systems.size(), c.screens.size(), c.pairs,
                c.fold ? std::to_string(*c.fold).c_str() : "-");
    total_screens += c.screens.size();
    all_systems.insert(c.systems.begin(), c.systems.end());
  }
  std::printf("%-16s %8zu %8zu %8zu\n", "total", all_systems.size(), total_screens, pairs.size());

  run.result("n_pairs", pairs.size());
  run.result("n_evaluations", per_eval.size());
  run.emit(sidecar(a.out, ".run.json"));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string variant = "gru4";
  std::uint64_t seed = 0;
  training::TrainConfig cfg;
  bool no_swap = false;
  std::string audio_root, cache_dir;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--variant", f.variant, "Model variant")
      ->check(CLI::IsMember({"attention", "gru1", "gru2", "gru3", "gru4"}))
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "Seed for initialisation, splits, batching and augmentation")
      ->capture_default_str();
  sub->add_option("--epochs", f.cfg.epochs, "Maximum number of epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--lr", f.cfg.learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--val-frac", f.cfg.val_fraction, "Fraction of pairs held out for early stopping")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  sub->add_option("--batch-size", f.cfg.batch_size, "Pairs per batch")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--patience", f.cfg.patience, "Epochs without improvement before stopping")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_flag("--no-swap", f.no_swap, "Disable random A/B swap augmentation");
  sub->add_option("--audio-root", f.audio_root,
                  "Directory that manifest audio paths are relative to (default: manifest directory)");
  sub->add_option("--cache-dir", f.cache_dir, "Directory for cached mel features");
}

void record_train_flags(RunManifest& run, const TrainFlags& f, const model::ModelSpec& spec) {
  run.seed(f.seed);
  auto& c = run.config();
  c["variant"] = f.variant;
  c["model_spec"] = model::spec_to_json(spec);
  c["epochs"] = f.cfg.epochs;
  c["lr"] = f.cfg.learning_rate;
  c["beta1"] = f.cfg.beta1;
  c["beta2"] = f.cfg.beta2;
  c["epsilon"] = f.cfg.epsilon;
  c["val_frac"] = f.cfg.val_fraction;
  c["batch_size"] = f.cfg.batch_size;
  c["patience"] = f.cfg.patience;
  c["swap_augment"] = f.cfg.swap_augment;
  if (!f.audio_root.empty()) c["audio_root"] = f.audio_root;
  if (!f.cache_dir.empty()) c["cache_dir"] = f.cache_dir;
}

training::TrainConfig resolved_config(const TrainFlags& f) {
  training::TrainConfig cfg = f.cfg;
  cfg.seed = f.seed;
  cfg.swap_augment = !f.no_swap;
  cfg.validate();
  return cfg;
}

struct TrainArgs {
  std::string manifest, out;
  TrainFlags flags;
};

int cmd_train(TrainArgs a) {
  RunManifest run("train");
  const auto cfg = resolved_config(a.flags);
  a.flags.cfg = cfg;
  const auto spec = model::ModelSpec::defaults(model::parse_variant(a.flags.variant));
  record_train_flags(run, a.flags, spec);
  run.input("manifest", a.manifest);

  const auto pairs = data::read_manifest(a.manifest);
  audio::FeatureStore features(audio_root_for(a.manifest, a.flags.audio_root), mel_for(spec),
                               cache_dir_for(a.flags.cache_dir));
  auto result = training::train(pairs, features, spec, cfg, &std::cerr);

  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  model::save_checkpoint(result.model, result.metadata, a.out);
  const fs::path log_path = sidecar(a.out, ".log.csv");
  training::write_training_log(log_path, result.log);

  run.output("checkpoint", a.out);
  run.output("training_log", log_path);
  run.result("epochs_run", result.metadata.epochs_run);
  if (result.metadata.best_val_loss) run.result("best_val_loss", *result.metadata.best_val_loss);
  if (result.final_train_accuracy) {
    run.result("final_train_accuracy", *result.final_train_accuracy);
    std::printf("final train accuracy: %.1f%%\n", *result.final_train_accuracy);
  }
  std::printf("epochs run: %d\n", result.metadata.epochs_run);
  run.emit(sidecar(a.out, ".run.json"));
  return kExitOk;
}

// ---------------------------------------------------------------------------

void write_report(const eval::EvalReport& report, const std::string& out) {
  if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
  std::ofstream f(out);
  f << eval::report_to_json(report).dump(2) << '\n';
  if (!f) throw DataError("cannot write report " + out);
  std::cout << eval::report_table(report);
}

struct EvaluateArgs {
  std::string manifest, checkpoint, mos, out, rule = "mean", audio_root, cache_dir;
};

int cmd_evaluate(const EvaluateArgs& a) {
  RunManifest run("evaluate");
  run.input("manifest", a.manifest);
  run.config()["system_rule"] = a.rule;
  const auto pairs = data::read_manifest(a.manifest);

  std::vector<double> predictions;
  eval::EvalReport report;
  if (!a.mos.empty()) {
    run.input("mos", a.mos);
    predictions = eval::mos_predictions(pairs, eval::read_mos_csv(a.mos));
  } else {
    run.input("checkpoint", a.checkpoint);
    if (!a.audio_root.empty()) run.config()["audio_root"] = a.audio_root;
    if (!a.cache_dir.empty()) run.config()["cache_dir"] = a.cache_dir;
    const auto ckpt = model::load_checkpoint(a.checkpoint);
    audio::FeatureStore features(audio_root_for(a.manifest, a.audio_root), mel_for(ckpt.model.spec()),
                                 cache_dir_for(a.cache_dir));
    predictions = eval::model_predictions(ckpt.model, pairs, features);
  }
  report = eval::evaluate_predictions(pairs, predictions, parse_rule(a.rule));
  if (!report.overall.stimulus_accuracy && !report.overall.system_accuracy) {
    throw DataError("evaluation has zero included pairs");
  }
  if (!report.overall.system_accuracy) {
    throw DataError("system accuracy: zero included pairs");
  }
  report.source_kind = a.mos.empty() ? "checkpoint" : "mos";
  report.source = a.mos.empty() ? a.checkpoint : a.mos;
  write_report(report, a.out);

  run.output("report", a.out);
  if (report.overall.stimulus_accuracy) run.result("stimulus_accuracy", *report.overall.stimulus_accuracy);
  run.result("system_accuracy", *report.overall.system_accuracy);
  run.emit(sidecar(a.out, ".run.json"));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CrossvalArgs {
  std::string manifest, out, rule = "mean";
  TrainFlags flags;
};

int cmd_crossval(CrossvalArgs a) {
  RunManifest run("crossval");
  const auto cfg = resolved_config(a.flags);
  a.flags.cfg = cfg;
  const auto spec = model::ModelSpec::defaults(model::parse_variant(a.flags.variant));
  record_train_flags(run, a.flags, spec);
  run.config()["system_rule"] = a.rule;
  run.input("manifest", a.manifest);

  const auto pairs = data::read_manifest(a.manifest);
  data::FoldSpec folds;
  for (const auto& p : pairs) {
    if (!p.fold) throw DataError("pair " + p.evaluation_id + "/" + p.utterance_id + " has no fold; run convert with --folds");
    folds.assignment[p.evaluation_id] = *p.fold;
    folds.n_folds = std::max(folds.n_folds, *p.fold + 1);
  }
  audio::FeatureStore features(audio_root_for(a.manifest, a.flags.audio_root), mel_for(spec),
                               cache_dir_for(a.flags.cache_dir));
  auto report = eval::cross_validate(pairs, folds, spec, cfg, features, parse_rule(a.rule), &std::cerr);
  report.source = a.manifest;
  write_report(report, a.out);

  run.output("report", a.out);
  run.result("n_folds", folds.n_folds);
  if (report.overall.stimulus_accuracy) run.result("held_out_stimulus_accuracy", *report.overall.stimulus_accuracy);
  run.emit(sidecar(a.out, ".run.json"));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, a, b, run_manifest;
};

int cmd_predict(const PredictArgs& a) {
  RunManifest run("predict");
  run.input("checkpoint", a.checkpoint);
  run.input("a", a.a);
  run.input("b", a.b);
  const auto ckpt = model::load_checkpoint(a.checkpoint);
  const auto cfg = mel_for(ckpt.model.spec());
  const auto mel_a = audio::features_from_wav(a.a, cfg);
  const auto mel_b = audio::features_from_wav(a.b, cfg);
  const bool anti = ckpt.model.spec().anti_symmetric();
  auto phi = [&](const Mat<float>& x, const Mat<float>& y) {
    return static_cast<double>(anti ? ckpt.model.predict(x, y) : ckpt.model.predict_baseline_gru1(x, y));
  };
  const double ab = phi(mel_a.frames, mel_b.frames);
  const double ba = phi(mel_b.frames, mel_a.frames);
  if (!std::isfinite(ab) || !std::isfinite(ba)) throw NumericError("prediction is not finite");
  std::printf("Phi(A,B) = %.9f\nPhi(B,A) = %.9f\n", ab, ba);
  run.result("phi_ab", ab);
  run.result("phi_ba", ba);
  run.emit(a.run_manifest);
  return kExitOk;
}

struct GradcheckArgs {
  std::string variant = "attention", run_manifest;
  std::uint64_t seed = 0;
  int pairs = 2, frames = 8;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  RunManifest run("gradcheck");
  run.seed(a.seed);
  run.config()["variant"] = a.variant;
  run.config()["pairs"] = a.pairs;
  run.config()["max_frames"] = a.frames;
  const auto spec = model::ModelSpec::tiny(model::parse_variant(a.variant));
  run.config()["model_spec"] = model::spec_to_json(spec);
  const auto report = training::check_training_gradients(spec, a.seed, a.pairs, a.frames);
  std::printf("variant %s: %zu values checked, max relative error %.3e (%s[%ld])\n", a.variant.c_str(),
              report.n_checked, report.max_rel_error, report.worst_variable.c_str(), static_cast<long>(report.worst_index));
  run.result("max_rel_error", report.max_rel_error);
  run.result("worst_variable", report.worst_variable);
  run.emit(a.run_manifest);
  if (!(report.max_rel_error <= kGradTolerance)) {
    std::fprintf(stderr, "gradient check failed: %.3e > %.0e\n", report.max_rel_error, kGradTolerance);
    return kExitNumeric;
  }
  return kExitOk;
}

struct SynthArgs {
  std::string out;
  synth::SynthConfig cfg;
};

int cmd_synth(const SynthArgs& a) {
  RunManifest run("synth");
  run.seed(a.cfg.seed);
  auto& c = run.config();
  c["pairs"] = a.cfg.n_pairs;
  c["evaluations"] = a.cfg.n_evaluations;
  c["listeners"] = a.cfg.listeners;
  c["seconds"] = a.cfg.seconds;
  c["sample_rate"] = a.cfg.sample_rate;
  c["snr_db"] = a.cfg.snr_db;
  const auto corpus = synth::write_synthetic_corpus(a.out, a.cfg);
  run.output("directory", a.out);
  std::printf("wrote %d pairs in %zu evaluations to %s\n", a.cfg.n_pairs, corpus.dates.size(),
              a.out.c_str());
  run.emit(fs::path(a.out) / "synth.run.json");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefnet: pairwise speech preference from listening-test ratings"};
  app.set_version_flag("--version", PREFNET_VERSION);
  app.require_subcommand(1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Convert MUSHRA ratings to a preference-pair manifest");
  c->add_option("--ratings", convert.ratings, "MUSHRA ratings CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--dates", convert.dates, "CSV `evaluation_id,date` used for chronological folds");
  c->add_option("--out", convert.out, "Output manifest (JSON lines)")->required();
  c->add_option("--folds", convert.folds, "Assign whole evaluations to N chronological folds")
      ->check(CLI::PositiveNumber);
  c->add_flag("!--keep-audio-paths", convert.rebase,
              "Copy audio paths verbatim instead of rewriting them relative to the manifest");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a manifest and write a checkpoint");
  t->add_option("--manifest", train.manifest, "Pair manifest")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output checkpoint")->required();
  add_train_flags(t, train.flags);

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Stimulus and system accuracy of a checkpoint or MOS baseline");
  e->add_option("--manifest", evaluate.manifest, "Pair manifest")->required()->check(CLI::ExistingFile);
  auto* ck = e->add_option("--checkpoint", evaluate.checkpoint, "Model checkpoint")->check(CLI::ExistingFile);
  auto* mos = e->add_option("--mos", evaluate.mos, "CSV `audio_path,predicted_mos` for the MOS baseline")
                  ->check(CLI::ExistingFile);
  ck->excludes(mos);
  e->add_option("--out", evaluate.out, "Output report (JSON)")->required();
  e->add_option("--rule", evaluate.rule, "System-level aggregation")
      ->check(CLI::IsMember({"mean", "majority"}))
      ->capture_default_str();
  e->add_option("--audio-root", evaluate.audio_root,
                "Directory that manifest audio paths are relative to (default: manifest directory)");
  e->add_option("--cache-dir", evaluate.cache_dir, "Directory for cached mel features");

  CrossvalArgs crossval;
  auto* x = app.add_subcommand("crossval", "Train once per fold, holding that fold out");
  x->add_option("--manifest", crossval.manifest, "Pair manifest with a fold column")
      ->required()
      ->check(CLI::ExistingFile);
  x->add_option("--out", crossval.out, "Output report (JSON)")->required();
  x->add_option("--rule", crossval.rule, "System-level aggregation")
      ->check(CLI::IsMember({"mean", "majority"}))
      ->capture_default_str();
  add_train_flags(x, crossval.flags);

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Print Phi(A,B) and Phi(B,A) for two WAV files");
  p->add_option("--checkpoint", predict.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  p->add_option("--a", predict.a, "First WAV file")->required();
  p->add_option("--b", predict.b, "Second WAV file")->required();
  p->add_option("--run-manifest", predict.run_manifest, "Write the run manifest here instead of stderr");

  GradcheckArgs gradcheck;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of training gradients at tiny size");
  g->add_option("--variant", gradcheck.variant, "Model variant")
      ->check(CLI::IsMember({"attention", "gru1", "gru2", "gru3", "gru4"}))
      ->capture_default_str();
  g->add_option("--seed", gradcheck.seed, "Seed for weights and inputs")->capture_default_str();
  g->add_option("--pairs", gradcheck.pairs, "Number of random pairs")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--frames", gradcheck.frames, "Maximum sequence length")->check(CLI::PositiveNumber)->capture_default_str();
  g->add_option("--run-manifest", gradcheck.run_manifest, "Write the run manifest here instead of stderr");

  SynthArgs synth_args;
  auto* s = app.add_subcommand("synth", "Write a separable tone-versus-noisy-tone corpus");
  s->group("");  // development command, hidden from --help
  s->add_option("--out", synth_args.out, "Output directory")->required();
  s->add_option("--pairs", synth_args.cfg.n_pairs, "Number of screens")->capture_default_str();
  s->add_option("--evaluations", synth_args.cfg.n_evaluations, "Number of evaluations")->capture_default_str();
  s->add_option("--listeners", synth_args.cfg.listeners, "Listeners per screen")->capture_default_str();
  s->add_option("--seconds", synth_args.cfg.seconds, "Clip length in seconds")->capture_default_str();
  s->add_option("--sample-rate", synth_args.cfg.sample_rate, "Sample rate in Hz")->capture_default_str();
  s->add_option("--snr-db", synth_args.cfg.snr_db, "SNR of the noisy system in dB")->capture_default_str();
  s->add_option("--seed", synth_args.cfg.seed, "Seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c) return cmd_convert(convert);
    if (*t) return cmd_train(train);
    if (*e) {
      if (evaluate.checkpoint.empty() == evaluate.mos.empty()) {
        std::cerr << "evaluate: exactly one of --checkpoint or --mos is required\n";
        return kExitUsage;
      }
      return cmd_evaluate(evaluate);
    }
    if (*x) return cmd_crossval(crossval);
    if (*p) return cmd_predict(predict);
    if (*g) return cmd_gradcheck(gradcheck);
    if (*s) return cmd_synth(synth_args);
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
