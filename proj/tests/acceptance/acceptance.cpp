// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero on any failure.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "prefnet/evaluation.hpp"
#include "prefnet/kernels.hpp"
#include "prefnet/model.hpp"
#include "prefnet/preference.hpp"
#include "prefnet/synthetic.hpp"
#include "prefnet/training.hpp"

using namespace prefnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

template <typename T>
Mat<T> random_mel(Rng& rng, Eigen::Index frames, Eigen::Index mels) {
  Mat<T> m(frames, mels);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.normal());
  return m;
}

constexpr model::Variant kAntiSymmetric[] = {model::Variant::attention, model::Variant::gru2,
                                             model::Variant::gru3, model::Variant::gru4};
constexpr model::Variant kAll[] = {model::Variant::attention, model::Variant::gru1, model::Variant::gru2,
                                   model::Variant::gru3, model::Variant::gru4};

// 1. Swapping the inputs complements the output in 32-bit arithmetic.
Outcome anti_symmetry() {
  Rng rng(derive_seed(1, "acceptance-antisymmetry"));
  double worst = 0.0;
  for (auto v : kAntiSymmetric) {
    const auto spec = model::ModelSpec::defaults(v);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto net = model::PrefNet<float>::initialised(spec, rng.below(1u << 30));
      const auto a = random_mel<float>(rng, 1 + rng.below(200), spec.n_mels);
      const auto b = random_mel<float>(rng, 1 + rng.below(200), spec.n_mels);
      const double dev = std::abs(static_cast<double>(net.predict(a, b)) + net.predict(b, a) - 1.0);
      worst = std::max(worst, dev);
    }
  }
  return {worst <= 1e-5, fmt("max |Phi(A,B)+Phi(B,A)-1| = %.2e over 4 variants x 1000 trials", worst)};
}

// 2. A stimulus compared with itself scores one half.
Outcome self_comparison() {
  Rng rng(derive_seed(2, "acceptance-self"));
  double worst = 0.0;
  for (auto v : kAntiSymmetric) {
    const auto spec = model::ModelSpec::defaults(v);
    for (int trial = 0; trial < 100; ++trial) {
      const auto net = model::PrefNet<float>::initialised(spec, rng.below(1u << 30));
      const auto x = random_mel<float>(rng, 1 + rng.below(200), spec.n_mels);
      worst = std::max(worst, std::abs(static_cast<double>(net.predict(x, x)) - 0.5));
    }
  }
  return {worst <= 1e-6, fmt("max |Phi(X,X)-0.5| = %.2e over 4 variants x 100 inputs", worst)};
}

// 3. The plain sigmoid head with a bias breaks the complement identity.
Outcome gru1_breaks_symmetry() {
  Rng rng(derive_seed(3, "acceptance-gru1"));
  const auto spec = model::ModelSpec::defaults(model::Variant::gru1);
  auto net = model::PrefNet<float>::initialised(spec, 3);
  net.parameter("head.bias").value(0, 0) = 0.5f;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_mel<float>(rng, 1 + rng.below(200), spec.n_mels);
    const auto b = random_mel<float>(rng, 1 + rng.below(200), spec.n_mels);
    const double dev = std::abs(static_cast<double>(net.predict_baseline_gru1(a, b)) +
                                net.predict_baseline_gru1(b, a) - 1.0);
    worst = std::max(worst, dev);
  }
  return {worst > 0.01, fmt("head bias 0.5: max |Phi(A,B)+Phi(B,A)-1| = %.3f over 100 pairs", worst)};
}

// 4. Joint softmax sums to one over all entries, is positive and shift invariant.
Outcome joint_softmax_properties() {
  Rng rng(derive_seed(4, "acceptance-softmax"));
  double worst_sum = 0.0, worst_shift = 0.0, min_entry = 1.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = 1 + rng.below(64), c = 1 + rng.below(64);
    Mat<float> s(r, c);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = static_cast<float>(rng.uniform(-10.0, 10.0));
    const auto w = nn::joint_softmax(s);
    worst_sum = std::max(worst_sum, std::abs(static_cast<double>(w.cast<double>().sum()) - 1.0));
    min_entry = std::min(min_entry, static_cast<double>(w.minCoeff()));
    const float shift = static_cast<float>(rng.uniform(-50.0, 50.0));
    const Mat<float> shifted = (s.array() + shift).matrix();
    worst_shift = std::max(worst_shift,
                           static_cast<double>((nn::joint_softmax(shifted) - w).cwiseAbs().maxCoeff()));
  }
  const bool pass = worst_sum <= 1e-6 && min_entry > 0.0 && worst_shift <= 1e-6;
  return {pass, fmt("max |sum-1| = %.2e, min entry = %.2e, max shift change = %.2e", worst_sum, min_entry,
                    worst_shift)};
}

// 5. End-to-end reverse-mode gradients agree with finite differences.
Outcome gradients() {
  double worst = 0.0;
  std::string where;
  for (auto v : kAll) {
    const auto report = training::check_training_gradients(model::ModelSpec::tiny(v), 5, 2, 8);
    if (report.max_rel_error >= worst) {
      worst = report.max_rel_error;
      where = std::string(model::to_string(v)) + " " + report.worst_variable;
    }
  }
  return {worst <= 1e-4, fmt("max relative error %.2e (", worst) + where + ")"};
}

// 6. Pair conversion equals a brute-force double loop.
Outcome conversion_oracle() {
  Rng rng(derive_seed(6, "acceptance-conversion"));
  int mismatches = 0, ties = 0;
  std::size_t n_pairs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto records = oracle::random_mushra(rng, 5, 10, 4);
    const auto got = data::build_preference_pairs(records);
    const auto want = oracle::preference_pairs(records);
    mismatches += got != want;
    n_pairs += got.size();
    for (const auto& p : got) ties += p.label == 0.5;
  }
  return {mismatches == 0, fmt("%.0f of 100 tables differ; %.0f pairs compared, %.0f with tied labels",
                               mismatches, static_cast<double>(n_pairs), ties)};
}

// 7. Kernels against naive loops and a scalar GRU step.
Outcome kernel_oracles() {
  Rng rng(derive_seed(7, "acceptance-kernels"));
  auto random = [&](Eigen::Index r, Eigen::Index c) {
    Mat<double> m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
  };
  double conv_err = 0.0, affine_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int width = 1 + 2 * static_cast<int>(rng.below(5));
    const int dilation = 1 + static_cast<int>(rng.below(4));
    const auto n = 1 + rng.below(40), ci = 1 + rng.below(16), co = 1 + rng.below(16);
    const auto x = random(n, ci), k = random(width * ci, co), b = random(1, co);
    conv_err = std::max(conv_err, (nn::conv1d(x, k, b, {width, dilation}) -
                                   oracle::conv1d(x, k, b, width, dilation)).cwiseAbs().maxCoeff());
    const auto w = random(ci, co);
    affine_err = std::max(affine_err, (nn::affine(x, w, b) - oracle::affine(x, w, b)).cwiseAbs().maxCoeff());
  }
  Mat<double> wi(1, 3), wh(1, 3), wb(1, 3), x(1, 1);
  wi << 0.5, -0.25, 0.8;
  wh << -0.3, 0.6, 1.2;
  wb << 0.1, 0.2, -0.1;
  x << 0.9;
  RowVec<double> h0(1);
  h0 << 0.4;
  const double h = 0.4, xv = 0.9;
  const double z = 1.0 / (1.0 + std::exp(-(xv * 0.5 + h * -0.3 + 0.1)));
  const double r = 1.0 / (1.0 + std::exp(-(xv * -0.25 + h * 0.6 + 0.2)));
  const double cand = std::tanh(xv * 0.8 + r * h * 1.2 - 0.1);
  const double expect = (1.0 - z) * h + z * cand;
  const double gru_err = std::abs(nn::gru_sequence<double>(x, {wi, wh, wb}, h0, false)(0, 0) - expect);
  const bool pass = conv_err <= 1e-6 && affine_err <= 1e-6 && gru_err <= 1e-10;
  return {pass, fmt("conv1d %.1e, affine %.1e over 200 shapes; GRU step %.1e", conv_err, affine_err, gru_err)};
}

// 8. gru4 with the default recipe fits a separable 50-pair corpus.
Outcome overfit() {
  const auto start = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.n_pairs = 50;
  sc.seconds = 1.0;
  sc.seed = 8;
  audio::FeatureStore store;
  const auto pairs = synth::synthetic_pairs_in_memory(sc, store);
  training::TrainConfig cfg;  // 50 epochs, Adam 1e-3, batch 16, 10% validation, patience 5
  cfg.seed = 8;
  const auto result = training::train(pairs, store, model::ModelSpec::defaults(model::Variant::gru4), cfg);
  const double train_acc = result.final_train_accuracy.value_or(0.0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {train_acc >= 95.0 && result.metadata.epochs_run <= 50 && seconds < 600.0,
          fmt("training accuracy %.1f%% after %.0f epochs, %.0f s", train_acc, result.metadata.epochs_run,
              seconds)};
}

// 9. Accuracy identities and system-level granularity.
Outcome metric_identities() {
  Rng rng(derive_seed(9, "acceptance-metrics"));
  std::vector<double> p, complement;
  for (int i = 0; i < 500; ++i) {
    double v = rng.uniform();
    if (v == 0.5) v = 0.25;
    p.push_back(v);
    complement.push_back(1.0 - v);
  }
  const double same = eval::stimulus_accuracy(p, p).percent;
  const double flipped = eval::stimulus_accuracy(complement, p).percent;
  bool multiples = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pred, labels;
    std::vector<eval::SystemPairKey> keys;
    for (int s = 0; s < 10; ++s) {
      const double truth = rng.coin() ? 0.75 : 0.25;
      for (int k = 0; k < 5; ++k) {
        keys.push_back({"ev", "sys" + std::to_string(s), "ref"});
        pred.push_back(rng.uniform(0.001, 0.999));
        labels.push_back(truth);
      }
    }
    const auto r = eval::system_accuracy(pred, labels, keys);
    const double step = 100.0 / static_cast<double>(r.n_included);
    const double units = r.percent / step;
    multiples &= std::abs(units - std::round(units)) < 1e-9;
    if (r.n_included == 10) multiples &= std::abs(r.percent / 10.0 - std::round(r.percent / 10.0)) < 1e-9;
  }
  return {same == 100.0 && flipped == 0.0 && multiples,
          fmt("acc(Phi=p) = %.1f, acc(Phi=1-p) = %.1f, system accuracy on 10 pairs always a multiple of 10: ",
              same, flipped) + (multiples ? "yes" : "no")};
}

// 10. Same-seed CLI training is byte-identical, and cross-validation never leaks a pair.
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PREFNET_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path dir = fs::path(PREFNET_TEST_SCRATCH) / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto corpus = (dir / "corpus").string();
  bool ok = run_cli("synth --out " + corpus + " --pairs 12 --evaluations 12 --seconds 0.5 --seed 10") == 0;
  ok &= run_cli("convert --ratings " + corpus + "/ratings.csv --dates " + corpus + "/dates.csv --folds 4 --out " +
                (dir / "pairs.jsonl").string()) == 0;
  const std::string train = "train --manifest " + (dir / "pairs.jsonl").string() +
                            " --variant gru4 --epochs 3 --batch-size 4 --seed 10 --out ";
  ok &= run_cli(train + (dir / "a.ckpt").string()) == 0;
  ok &= run_cli(train + (dir / "b.ckpt").string()) == 0;
  const auto a = slurp(dir / "a.ckpt"), b = slurp(dir / "b.ckpt");
  const bool identical = ok && !a.empty() && a == b;

  // leakage on the 12-evaluation layout split into 4 folds
  const auto pairs = data::read_manifest(dir / "pairs.jsonl");
  data::FoldSpec folds;
  folds.n_folds = 4;
  std::map<int, std::set<std::string>> evals_per_fold;
  for (const auto& p : pairs) {
    folds.assignment[p.evaluation_id] = p.fold.value_or(-1);
    evals_per_fold[p.fold.value_or(-1)].insert(p.evaluation_id);
  }
  bool layout = evals_per_fold.size() == 4;
  for (const auto& [f, evals] : evals_per_fold) layout &= f >= 0 && f < 4 && evals.size() == 3;

  audio::FeatureStore store(dir);
  training::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 10;
  const auto report = eval::cross_validate(pairs, folds, model::ModelSpec::tiny(model::Variant::gru2, 64), cfg, store);
  std::size_t leaks = 0;
  std::multiset<std::size_t> tested;
  for (const auto& fr : report.folds) {
    std::set<std::string> train_evals;
    for (auto i : fr.train_indices) {
      train_evals.insert(pairs[i].evaluation_id);
      leaks += folds.fold_of(pairs[i].evaluation_id) == fr.fold;
    }
    for (auto i : fr.test_indices) {
      leaks += folds.fold_of(pairs[i].evaluation_id) != fr.fold;
      leaks += train_evals.count(pairs[i].evaluation_id);
      tested.insert(i);
    }
  }
  const bool partition = tested.size() == pairs.size() &&
                         std::set<std::size_t>(tested.begin(), tested.end()).size() == pairs.size();
  return {identical && layout && leaks == 0 && partition,
          std::string("checkpoints ") + (identical ? "byte-identical" : "DIFFER") + " (" +
              std::to_string(a.size()) + " bytes); 12 evaluations in 4 folds of 3: " + (layout ? "yes" : "no") +
              "; leaked pairs: " + std::to_string(leaks) + "; every pair tested once: " + (partition ? "yes" : "no")};
}

// 11. The MOS rule is complementary under swapping.
Outcome mos_complement() {
  std::size_t bad = 0, checked = 0;
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j) {
      const double a = 1.0 + 4.0 * i / 99.0, b = 1.0 + 4.0 * j / 99.0;
      bad += eval::mos_to_preference(a, b) + eval::mos_to_preference(b, a) != 1.0;
      ++checked;
    }
  }
  return {bad == 0, fmt("%.0f of %.0f grid points violate f(a,b)+f(b,a)=1", static_cast<double>(bad),
                        static_cast<double>(checked))};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "anti-symmetry", anti_symmetry},
      {2, "self-comparison", self_comparison},
      {3, "gru1 breaks symmetry", gru1_breaks_symmetry},
      {4, "joint softmax", joint_softmax_properties},
      {5, "gradient check", gradients},
      {6, "conversion oracle", conversion_oracle},
      {7, "kernel oracles", kernel_oracles},
      {8, "overfit sanity", overfit},
      {9, "metric identities", metric_identities},
      {10, "determinism and folds", determinism},
      {11, "MOS baseline", mos_complement},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d %-22s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), s);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
