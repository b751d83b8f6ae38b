// SPDX-License-Identifier: Apache-2.0
#include "prefnet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace prefnet::eval {

namespace {

int direction(double x) { return x > 0.5 ? 1 : (x < 0.5 ? -1 : 0); }

}  // namespace

AccuracyResult stimulus_accuracy(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("stimulus_accuracy: size mismatch");
  AccuracyResult r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int truth = direction(labels[i]);
    if (truth == 0) {
      r.excluded.push_back(i);
      continue;
    }
    ++r.n_included;
    if (direction(predictions[i]) == truth) ++correct;
  }
  if (r.n_included == 0) throw DataError("stimulus accuracy: zero included pairs");
  r.percent = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n_included);
  return r;
}

AccuracyResult system_accuracy(std::span<const double> predictions, std::span<const double> labels,
                               std::span<const SystemPairKey> systems, SystemRule rule) {
  if (predictions.size() != labels.size() || labels.size() != systems.size()) {
    throw ShapeError("system_accuracy: size mismatch");
  }
  struct Group {
    std::vector<double> phi, p;
  };
  std::map<SystemPairKey, Group> groups;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    SystemPairKey key = systems[i];
    double phi = predictions[i], p = labels[i];
    if (key.system_b < key.system_a) {
      std::swap(key.system_a, key.system_b);
      phi = 1.0 - phi;
      p = 1.0 - p;
    }
    auto& g = groups[key];
    g.phi.push_back(phi);
    g.p.push_back(p);
  }

  AccuracyResult r;
  std::size_t correct = 0, ordinal = 0;
  for (const auto& [key, g] : groups) {
    int predicted = 0, truth = 0;
    if (rule == SystemRule::mean_probability) {
      double sum_phi = 0.0, sum_p = 0.0;
      for (std::size_t k = 0; k < g.phi.size(); ++k) {
        sum_phi += g.phi[k];
        sum_p += g.p[k];
      }
      const auto n = static_cast<double>(g.phi.size());
      predicted = direction(sum_phi / n);
      truth = direction(sum_p / n);
    } else {
      int vote_phi = 0, vote_p = 0;
      for (std::size_t k = 0; k < g.phi.size(); ++k) {
        vote_phi += direction(g.phi[k]);
        vote_p += direction(g.p[k]);
      }
      predicted = (vote_phi > 0) - (vote_phi < 0);
      truth = (vote_p > 0) - (vote_p < 0);
    }
    if (predicted == 0 || truth == 0) {
      r.excluded.push_back(ordinal++);
      continue;
    }
    ++ordinal;
    ++r.n_included;
    if (predicted == truth) ++correct;
  }
  if (r.n_included == 0) throw DataError("system accuracy: zero included pairs");
  r.percent = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n_included);
  return r;
}

double mos_to_preference(double mos_a, double mos_b) {
  if (mos_a > mos_b) return 1.0;
  if (mos_a < mos_b) return 0.0;
  return 0.5;
}

std::map<std::string, double> read_mos_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open MOS file: " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "audio_path,predicted_mos") {
    throw DataError(path.string() + ":1: expected header 'audio_path,predicted_mos'");
  }
  std::map<std::string, double> mos;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    const auto f = data::split_csv_line(line);
    if (f.size() != 2) throw DataError(where + ": expected 'audio_path,predicted_mos'");
    double value = 0.0;
    try {
      std::size_t used = 0;
      value = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw DataError(where + ": predicted_mos '" + f[1] + "' is not a number");
    }
    if (!std::isfinite(value)) throw DataError(where + ": predicted_mos must be finite");
    if (!mos.emplace(f[0], value).second) throw DataError(where + ": duplicate audio path");
  }
  return mos;
}

std::vector<double> mos_predictions(std::span<const data::PreferencePair> pairs,
                                    const std::map<std::string, double>& mos) {
  auto lookup = [&](const std::string& audio) {
    const auto it = mos.find(audio);
    if (it == mos.end()) throw DataError("no predicted MOS for audio '" + audio + "'");
    return it->second;
  };
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(mos_to_preference(lookup(p.audio_a), lookup(p.audio_b)));
  return out;
}

std::vector<double> model_predictions(const model::PrefNet<float>& net,
                                      std::span<const data::PreferencePair> pairs,
                                      audio::FeatureStore& features) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    out.push_back(net.probability(features.get(p.audio_a).frames, features.get(p.audio_b).frames));
  }
  return out;
}

AccuracyRow accuracy_row(std::string scope, std::span<const data::PreferencePair> pairs,
                         std::span<const double> predictions, SystemRule rule) {
  if (pairs.size() != predictions.size()) throw ShapeError("accuracy_row: size mismatch");
  AccuracyRow row;
  row.scope = std::move(scope);
  std::vector<double> labels;
  std::vector<SystemPairKey> keys;
  for (const auto& p : pairs) {
    labels.push_back(p.label);
    keys.push_back({p.evaluation_id, p.system_a, p.system_b});
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (direction(labels[i]) == 0) {
      const auto& p = pairs[i];
      row.excluded_pairs.push_back(p.evaluation_id + "/" + p.utterance_id + "/" + p.system_a + "/" +
                                   p.system_b);
    }
  }
  try {
    const auto s = stimulus_accuracy(predictions, labels);
    row.stimulus_accuracy = s.percent;
    row.n_stimulus_pairs = s.n_included;
  } catch (const DataError&) {
  }
  try {
    const auto s = system_accuracy(predictions, labels, keys, rule);
    row.system_accuracy = s.percent;
    row.n_system_pairs = s.n_included;
    row.n_excluded_system_pairs = s.excluded.size();
  } catch (const DataError&) {
    std::map<SystemPairKey, int> distinct;
    for (const auto& k : keys) {
      auto c = k;
      if (c.system_b < c.system_a) std::swap(c.system_a, c.system_b);
      distinct[c] = 1;
    }
    row.n_excluded_system_pairs = distinct.size();
  }
  return row;
}

EvalReport evaluate_predictions(std::span<const data::PreferencePair> pairs,
                                std::span<const double> predictions, SystemRule rule) {
  if (pairs.size() != predictions.size()) throw ShapeError("evaluate_predictions: size mismatch");
  EvalReport report;
  report.rule = rule;
  report.overall = accuracy_row("overall", pairs, predictions, rule);

  std::map<std::string, std::vector<std::size_t>> by_eval;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_eval[pairs[i].evaluation_id].push_back(i);
  for (const auto& [id, idx] : by_eval) {
    std::vector<data::PreferencePair> sub;
    std::vector<double> pred;
    for (auto i : idx) {
      sub.push_back(pairs[i]);
      pred.push_back(predictions[i]);
    }
    report.evaluations.push_back(accuracy_row(id, sub, pred, rule));
  }
  return report;
}

EvalReport cross_validate(std::span<const data::PreferencePair> pairs, const data::FoldSpec& folds,
                          const model::ModelSpec& spec, const training::TrainConfig& cfg,
                          audio::FeatureStore& features, SystemRule rule, std::ostream* progress) {
  if (folds.n_folds < 2) throw DataError("cross_validate: need at least two folds");
  std::vector<int> fold_of(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    fold_of[i] = folds.fold_of(pairs[i].evaluation_id);
    if (fold_of[i] < 0 || fold_of[i] >= folds.n_folds) {
      throw DataError("cross_validate: fold index out of range");
    }
  }
  std::vector<std::size_t> fold_size(static_cast<std::size_t>(folds.n_folds), 0);
  for (int f : fold_of) ++fold_size[static_cast<std::size_t>(f)];
  for (int fold = 0; fold < folds.n_folds; ++fold) {
    if (fold_size[static_cast<std::size_t>(fold)] == 0) {
      throw DataError("cross_validate: fold " + std::to_string(fold) + " is empty");
    }
  }

  EvalReport report;
  report.source_kind = "cross-validation";
  report.source = std::string(model::to_string(spec.variant));
  report.rule = rule;
  std::vector<double> held_out(pairs.size(), 0.5);

  for (int fold = 0; fold < folds.n_folds; ++fold) {
    FoldResult fr;
    fr.fold = fold;
    std::vector<data::PreferencePair> train_pairs, test_pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (fold_of[i] == fold) {
        fr.test_indices.push_back(i);
        test_pairs.push_back(pairs[i]);
      } else {
        fr.train_indices.push_back(i);
        train_pairs.push_back(pairs[i]);
      }
    }
    fr.n_train_pairs = train_pairs.size();
    fr.n_test_pairs = test_pairs.size();

    training::TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, "fold-" + std::to_string(fold));
    if (progress) *progress << "fold " << fold << ": training on " << train_pairs.size() << " pairs\n";
    auto trained = training::train(train_pairs, features, spec, fold_cfg, progress);
    fr.log = trained.log;

    const auto train_pred = model_predictions(trained.model, train_pairs, features);
    const auto test_pred = model_predictions(trained.model, test_pairs, features);
    fr.train = accuracy_row("fold " + std::to_string(fold) + " train", train_pairs, train_pred, rule);
    fr.test = accuracy_row("fold " + std::to_string(fold) + " test", test_pairs, test_pred, rule);
    for (std::size_t k = 0; k < fr.test_indices.size(); ++k) held_out[fr.test_indices[k]] = test_pred[k];
    report.folds.push_back(std::move(fr));
  }
  report.overall = accuracy_row("held-out (all folds)", pairs, held_out, rule);
  return report;
}

namespace {

nlohmann::ordered_json row_json(const AccuracyRow& r) {
  nlohmann::ordered_json j;
  j["scope"] = r.scope;
  j["stimulus_accuracy"] = r.stimulus_accuracy ? nlohmann::ordered_json(*r.stimulus_accuracy) : nlohmann::ordered_json();
  j["system_accuracy"] = r.system_accuracy ? nlohmann::ordered_json(*r.system_accuracy) : nlohmann::ordered_json();
  j["n_stimulus_pairs"] = r.n_stimulus_pairs;
  j["n_system_pairs"] = r.n_system_pairs;
  j["n_excluded_system_pairs"] = r.n_excluded_system_pairs;
  j["excluded_pairs"] = r.excluded_pairs;
  return j;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", *v);
  return buf;
}

}  // namespace

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["source"] = {{"kind", report.source_kind}, {"path", report.source}};
  j["system_rule"] = report.rule == SystemRule::mean_probability ? "mean_probability" : "majority_vote";
  j["overall"] = row_json(report.overall);
  j["evaluations"] = nlohmann::ordered_json::array();
  for (const auto& r : report.evaluations) j["evaluations"].push_back(row_json(r));
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    j["folds"].push_back({{"fold", f.fold},
                          {"n_train_pairs", f.n_train_pairs},
                          {"n_test_pairs", f.n_test_pairs},
                          {"train", row_json(f.train)},
                          {"test", row_json(f.test)}});
  }
  return nlohmann::json::parse(j.dump());
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  if (!report.folds.empty()) {
    std::snprintf(line, sizeof line, "%-8s %10s %10s %10s %10s\n", "fold", "# train", "train acc",
                  "# test", "test acc");
    out << line;
    for (const auto& f : report.folds) {
      std::snprintf(line, sizeof line, "%-8d %10zu %10s %10zu %10s\n", f.fold + 1, f.n_train_pairs,
                    percent(f.train.stimulus_accuracy).c_str(), f.n_test_pairs,
                    percent(f.test.stimulus_accuracy).c_str());
      out << line;
    }
  }
  std::snprintf(line, sizeof line, "%-24s %10s %10s %12s\n", "evaluation", "stim pairs",
                "sys pairs", "stim / sys");
  out << line;
  auto emit = [&](const AccuracyRow& r) {
    const std::string acc = percent(r.stimulus_accuracy) + " / " + percent(r.system_accuracy);
    std::snprintf(line, sizeof line, "%-24s %10zu %10zu %12s\n", r.scope.c_str(), r.n_stimulus_pairs,
                  r.n_system_pairs, acc.c_str());
    out << line;
  };
  for (const auto& r : report.evaluations) emit(r);
  emit(report.overall);
  return out.str();
}

}  // namespace prefnet::eval
