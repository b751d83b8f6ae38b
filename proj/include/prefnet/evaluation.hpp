// SPDX-License-Identifier: Apache-2.0
/**
 * @file   evaluation.hpp
 * @brief  Stimulus- and system-level accuracy, cross-validation, MOS baseline.
 *
 * Pairs whose empirical label is exactly 0.5 have no ground-truth direction
 * and are excluded (and reported). A prediction of exactly 0.5 on a
 * directional pair is counted as wrong.
 */
#pragma once

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefnet/audio.hpp"
#include "prefnet/model.hpp"
#include "prefnet/preference.hpp"
#include "prefnet/training.hpp"

namespace prefnet::eval {

struct AccuracyResult {
  double percent = 0.0;
  std::size_t n_included = 0;
  std::vector<std::size_t> excluded;  ///< indices (stimulus) or group ordinals (system)
};

/// Throws DataError("zero included pairs") when every label is a tie.
AccuracyResult stimulus_accuracy(std::span<const double> predictions, std::span<const double> labels);

struct SystemPairKey {
  std::string evaluation_id;
  std::string system_a;
  std::string system_b;

  auto operator<=>(const SystemPairKey&) const = default;
};

enum class SystemRule {
  mean_probability,  ///< mean phi vs mean p over the pair's sentences
  majority_vote,     ///< majority of per-sentence directions on both sides
};

/**
 * Groups sentences by system pair. Keys given in either order are
 * canonicalised (a < b) with phi and p complemented, so the result does not
 * depend on how each pair happens to be oriented.
 */
AccuracyResult system_accuracy(std::span<const double> predictions, std::span<const double> labels,
                               std::span<const SystemPairKey> systems,
                               SystemRule rule = SystemRule::mean_probability);

/// 1 if a > b, 0 if a < b, 0.5 on a tie.
double mos_to_preference(double mos_a, double mos_b);

/// audio_path -> predicted MOS from CSV `audio_path,predicted_mos`.
std::map<std::string, double> read_mos_csv(const std::filesystem::path& path);

/// Baseline probabilities for every pair; missing audio paths are a DataError.
std::vector<double> mos_predictions(std::span<const data::PreferencePair> pairs,
                                    const std::map<std::string, double>& mos);

std::vector<double> model_predictions(const model::PrefNet<float>& net,
                                      std::span<const data::PreferencePair> pairs,
                                      audio::FeatureStore& features);

struct AccuracyRow {
  std::string scope;
  std::optional<double> stimulus_accuracy;
  std::optional<double> system_accuracy;
  std::size_t n_stimulus_pairs = 0;  ///< included in the stimulus metric
  std::size_t n_system_pairs = 0;    ///< included in the system metric
  std::size_t n_excluded_system_pairs = 0;
  std::vector<std::string> excluded_pairs;  ///< tied-label stimulus pairs
};

/// Accuracy over a set of pairs; a metric with nothing to score is left empty.
AccuracyRow accuracy_row(std::string scope, std::span<const data::PreferencePair> pairs,
                         std::span<const double> predictions,
                         SystemRule rule = SystemRule::mean_probability);

struct FoldResult {
  int fold = 0;
  std::size_t n_train_pairs = 0;
  std::size_t n_test_pairs = 0;
  AccuracyRow train;
  AccuracyRow test;
  std::vector<std::size_t> train_indices;  ///< into the cross-validated pair list
  std::vector<std::size_t> test_indices;
  std::vector<training::EpochLog> log;
};

struct EvalReport {
  std::string source_kind;  ///< "checkpoint", "mos" or "cross-validation"
  std::string source;
  SystemRule rule = SystemRule::mean_probability;
  AccuracyRow overall;
  std::vector<AccuracyRow> evaluations;
  std::vector<FoldResult> folds;
};

/// Overall and per-evaluation rows.
EvalReport evaluate_predictions(std::span<const data::PreferencePair> pairs,
                                std::span<const double> predictions,
                                SystemRule rule = SystemRule::mean_probability);

/**
 * Trains once per fold on every other fold and scores both the training
 * folds and the held-out fold with the returned checkpoint.
 */
EvalReport cross_validate(std::span<const data::PreferencePair> pairs, const data::FoldSpec& folds,
                          const model::ModelSpec& spec, const training::TrainConfig& cfg,
                          audio::FeatureStore& features,
                          SystemRule rule = SystemRule::mean_probability,
                          std::ostream* progress = nullptr);

nlohmann::json report_to_json(const EvalReport& report);
/// Human-readable table: one row per evaluation (or per fold, train and test).
std::string report_table(const EvalReport& report);

}  // namespace prefnet::eval
