// SPDX-License-Identifier: Apache-2.0
/**
 * @file   training.hpp
 * @brief  Brier-loss training with Adam, length-bucketed batches and early stopping.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "prefnet/audio.hpp"
#include "prefnet/model.hpp"
#include "prefnet/preference.hpp"

namespace prefnet::training {

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double val_fraction = 0.10;
  int patience = 5;
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool swap_augment = true;

  void validate() const;
};

/// Mean of (prediction - target)^2.
template <typename T>
T brier_loss(std::span<const T> predictions, std::span<const T> targets);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/**
 * One bias-corrected Adam update of a single tensor at step t >= 1:
 * m = b1 m + (1 - b1) g, v = b2 v + (1 - b2) g^2,
 * param -= lr * m_hat / (sqrt(v_hat) + eps).
 */
template <typename T>
void adam_update(Mat<T>& param, const Mat<T>& grad, Mat<T>& first_moment, Mat<T>& second_moment,
                 long step, const AdamConfig& cfg);

/// Moment buffers for every parameter of a model.
template <typename T>
class Adam {
 public:
  Adam(const std::vector<model::Parameter<T>>& params, AdamConfig cfg);
  /// Applies one update from the gradients currently stored in `params`.
  void step(std::vector<model::Parameter<T>>& params);
  long steps_taken() const { return step_; }

 private:
  AdamConfig cfg_;
  std::vector<Mat<T>> m_, v_;
  long step_ = 0;
};

struct PairLengths {
  std::size_t frames_a = 0;
  std::size_t frames_b = 0;

  std::size_t longer() const { return frames_a > frames_b ? frames_a : frames_b; }
};

struct Batch {
  std::vector<std::size_t> items;  ///< indices into the lengths span
  std::size_t max_frames = 0;
};

/**
 * Sorts items by the longer sequence of each pair, cuts consecutive runs of
 * batch_size, and shuffles the order of the runs with `seed`.
 */
std::vector<Batch> make_batches(std::span<const PairLengths> lengths, int batch_size,
                                std::uint64_t seed);

/// Both sides of every item zero-padded to the batch maximum, with validity masks.
struct PaddedBatch {
  std::vector<Mat<float>> a, b;
  std::vector<std::vector<std::uint8_t>> mask_a, mask_b;
  std::size_t max_frames = 0;
};

PaddedBatch pad_batch(const Batch& batch, std::span<const Mat<float>* const> features_a,
                      std::span<const Mat<float>* const> features_b);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> train_acc;
};

struct TrainResult {
  model::PrefNet<float> model;
  model::TrainingMetadata metadata;
  std::vector<EpochLog> log;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  /// Stimulus accuracy (%) of the returned parameters on the training split.
  std::optional<double> final_train_accuracy;
};

/**
 * Holds out round(val_fraction * n) pairs (seeded), trains for up to
 * `epochs` epochs and returns the parameters with the lowest validation
 * loss (training loss when nothing is held out), stopping after `patience`
 * epochs without improvement.
 */
TrainResult train(std::span<const data::PreferencePair> pairs, audio::FeatureStore& features,
                  const model::ModelSpec& spec, const TrainConfig& cfg,
                  std::ostream* progress = nullptr);

/**
 * Checks the reverse-mode gradient of the mean Brier loss over `n_pairs`
 * random (A, B, p) triples, in double precision, against central finite
 * differences on every parameter.
 */
nn::GradCheckReport check_training_gradients(const model::ModelSpec& spec, std::uint64_t seed,
                                             int n_pairs = 2, int max_frames = 8);

/// CSV `epoch,train_loss,val_loss,train_acc`; absent values are left empty.
void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace prefnet::training
