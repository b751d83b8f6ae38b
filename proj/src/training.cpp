// SPDX-License-Identifier: Apache-2.0
#include "prefnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "prefnet/evaluation.hpp"

namespace prefnet::training {

void TrainConfig::validate() const {
  if (epochs < 1) throw DataError("train config: epochs must be positive");
  if (!(learning_rate > 0.0)) throw DataError("train config: learning rate must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw DataError("train config: validation fraction must be in [0, 1)");
  }
  if (patience < 1) throw DataError("train config: patience must be positive");
  if (batch_size < 1) throw DataError("train config: batch size must be positive");
}

template <typename T>
T brier_loss(std::span<const T> predictions, std::span<const T> targets) {
  if (predictions.size() != targets.size()) throw ShapeError("brier_loss: size mismatch");
  if (predictions.empty()) throw ShapeError("brier_loss: empty batch");
  T sum = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const T diff = predictions[i] - targets[i];
    sum += diff * diff;
  }
  return sum / static_cast<T>(predictions.size());
}

template float brier_loss<float>(std::span<const float>, std::span<const float>);
template double brier_loss<double>(std::span<const double>, std::span<const double>);

template <typename T>
void adam_update(Mat<T>& param, const Mat<T>& grad, Mat<T>& first_moment, Mat<T>& second_moment,
                 long step, const AdamConfig& cfg) {
  if (step < 1) throw std::invalid_argument("adam_update: step index starts at 1");
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  first_moment = b1 * first_moment + (T(1) - b1) * grad;
  second_moment = b2 * second_moment + (T(1) - b2) * grad.cwiseAbs2();
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, step));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, step));
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  param.array() -= lr * (first_moment.array() / c1) / ((second_moment.array() / c2).sqrt() + eps);
}

template void adam_update<float>(Mat<float>&, const Mat<float>&, Mat<float>&, Mat<float>&, long,
                                 const AdamConfig&);
template void adam_update<double>(Mat<double>&, const Mat<double>&, Mat<double>&, Mat<double>&,
                                  long, const AdamConfig&);

template <typename T>
Adam<T>::Adam(const std::vector<model::Parameter<T>>& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
  }
}

template <typename T>
void Adam<T>::step(std::vector<model::Parameter<T>>& params) {
  if (params.size() != m_.size()) throw ShapeError("Adam: parameter list changed");
  ++step_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i].value, params[i].grad, m_[i], v_[i], step_, cfg_);
  }
}

template class Adam<float>;
template class Adam<double>;

std::vector<Batch> make_batches(std::span<const PairLengths> lengths, int batch_size,
                                std::uint64_t seed) {
  if (batch_size < 1) throw DataError("make_batches: batch size must be positive");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lengths[x].longer() < lengths[y].longer();
  });

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t k = start; k < end; ++k) {
      b.items.push_back(order[k]);
      b.max_frames = std::max(b.max_frames, lengths[order[k]].longer());
    }
    batches.push_back(std::move(b));
  }
  Rng rng(seed);
  rng.shuffle(batches);
  return batches;
}

PaddedBatch pad_batch(const Batch& batch, std::span<const Mat<float>* const> features_a,
                      std::span<const Mat<float>* const> features_b) {
  PaddedBatch out;
  out.max_frames = batch.max_frames;
  const auto rows = static_cast<Eigen::Index>(batch.max_frames);
  auto pad = [&](const Mat<float>& m, std::vector<Mat<float>>& dst,
                 std::vector<std::vector<std::uint8_t>>& masks) {
    if (m.rows() > rows) throw ShapeError("pad_batch: item longer than the batch maximum");
    Mat<float> padded = Mat<float>::Zero(rows, m.cols());
    padded.topRows(m.rows()) = m;
    dst.push_back(std::move(padded));
    std::vector<std::uint8_t> mask(batch.max_frames, 0);
    std::fill_n(mask.begin(), m.rows(), 1);
    masks.push_back(std::move(mask));
  };
  for (std::size_t item : batch.items) {
    pad(*features_a[item], out.a, out.mask_a);
    pad(*features_b[item], out.b, out.mask_b);
  }
  return out;
}

namespace {

Eigen::Index valid_count(const std::vector<std::uint8_t>& mask) {
  return static_cast<Eigen::Index>(std::count(mask.begin(), mask.end(), 1));
}

struct Example {
  const Mat<float>* a;
  const Mat<float>* b;
  double label;
};

double mean_loss(const model::PrefNet<float>& net, std::span<const Example> examples) {
  double sum = 0.0;
  for (const auto& ex : examples) {
    const double phi = net.probability(*ex.a, *ex.b);
    sum += (phi - ex.label) * (phi - ex.label);
  }
  return sum / static_cast<double>(examples.size());
}

std::optional<double> accuracy(const model::PrefNet<float>& net, std::span<const Example> examples) {
  std::vector<double> pred, labels;
  for (const auto& ex : examples) {
    pred.push_back(net.probability(*ex.a, *ex.b));
    labels.push_back(ex.label);
  }
  try {
    return eval::stimulus_accuracy(pred, labels).percent;
  } catch (const DataError&) {
    return std::nullopt;  // no directional label to score
  }
}

}  // namespace

TrainResult train(std::span<const data::PreferencePair> pairs, audio::FeatureStore& features,
                  const model::ModelSpec& spec, const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  spec.validate();
  if (pairs.empty()) throw DataError("train: manifest has no pairs");

  std::vector<Example> all;
  for (const auto& p : pairs) {
    all.push_back({&features.get(p.audio_a).frames, &features.get(p.audio_b).frames, p.label});
  }

  const std::size_t n = pairs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, "validation-split"));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - 1);

  TrainResult result{model::PrefNet<float>::initialised(spec, cfg.seed), {}, {}, {}, {}, {}};
  result.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  result.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(result.val_indices.begin(), result.val_indices.end());
  std::sort(result.train_indices.begin(), result.train_indices.end());

  std::vector<Example> train_set, val_set;
  for (auto i : result.train_indices) train_set.push_back(all[i]);
  for (auto i : result.val_indices) val_set.push_back(all[i]);

  std::vector<PairLengths> lengths;
  std::vector<const Mat<float>*> feats_a, feats_b;
  for (const auto& ex : train_set) {
    lengths.push_back({static_cast<std::size_t>(ex.a->rows()), static_cast<std::size_t>(ex.b->rows())});
    feats_a.push_back(ex.a);
    feats_b.push_back(ex.b);
  }

  auto& net = result.model;
  Adam<float> adam(net.parameters(),
                   {cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon});
  auto best = net.parameters();
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  model::PairTape<float> tape;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto tag = "epoch-" + std::to_string(epoch);
    const auto batches = make_batches(lengths, cfg.batch_size, derive_seed(cfg.seed, "batches-" + tag));
    Rng swap_rng(derive_seed(cfg.seed, "swap-" + tag));

    double loss_sum = 0.0;
    std::vector<double> seen_pred, seen_label;
    for (const auto& batch : batches) {
      const PaddedBatch padded = pad_batch(batch, feats_a, feats_b);
      const auto scale = 1.0f / static_cast<float>(batch.items.size());
      net.zero_grad();
      for (std::size_t k = 0; k < batch.items.size(); ++k) {
        const bool swap = cfg.swap_augment && swap_rng.coin();
        const auto& ex = train_set[batch.items[k]];
        const Mat<float>& xa = swap ? padded.b[k] : padded.a[k];
        const Mat<float>& xb = swap ? padded.a[k] : padded.b[k];
        const auto va = valid_count(swap ? padded.mask_b[k] : padded.mask_a[k]);
        const auto vb = valid_count(swap ? padded.mask_a[k] : padded.mask_b[k]);
        const auto target = static_cast<float>(swap ? 1.0 - ex.label : ex.label);

        const float phi = net.forward(xa, va, xb, vb, tape);
        if (!std::isfinite(phi)) {
          throw NumericError("non-finite prediction at epoch " + std::to_string(epoch) +
                             "; training aborted");
        }
        loss_sum += static_cast<double>(phi - target) * static_cast<double>(phi - target);
        seen_pred.push_back(phi);
        seen_label.push_back(target);
        net.backward(tape, 2.0f * (phi - target) * scale);
      }
      adam.step(net.parameters());
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(entry.train_loss)) {
      throw NumericError("training loss became NaN at epoch " + std::to_string(epoch));
    }
    try {
      entry.train_acc = eval::stimulus_accuracy(seen_pred, seen_label).percent;
    } catch (const DataError&) {
    }
    if (!val_set.empty()) entry.val_loss = mean_loss(net, val_set);
    result.log.push_back(entry);

    // with nothing held out the training loss (before this epoch's updates) selects
    const double criterion = entry.val_loss.value_or(entry.train_loss);
    if (criterion < best_loss) {
      best_loss = criterion;
      best = net.parameters();
      stale = 0;
    } else {
      ++stale;
    }
    if (progress) {
      *progress << "epoch " << epoch << " train_loss " << entry.train_loss;
      if (entry.val_loss) *progress << " val_loss " << *entry.val_loss;
      if (entry.train_acc) *progress << " train_acc " << *entry.train_acc;
      *progress << '\n';
    }
    if (stale >= cfg.patience) break;
  }

  for (std::size_t i = 0; i < best.size(); ++i) net.parameters()[i].value = best[i].value;
  net.zero_grad();
  result.metadata.seed = cfg.seed;
  result.metadata.epochs_run = static_cast<int>(result.log.size());
  if (!val_set.empty()) result.metadata.best_val_loss = best_loss;
  result.final_train_accuracy = accuracy(net, train_set);
  return result;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path.string());
  out.precision(9);
  out << "epoch,train_loss,val_loss,train_acc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (e.val_loss) out << *e.val_loss;
    out << ',';
    if (e.train_acc) out << *e.train_acc;
    out << '\n';
  }
}

}  // namespace prefnet::training

namespace prefnet::training {

nn::GradCheckReport check_training_gradients(const model::ModelSpec& spec, std::uint64_t seed,
                                             int n_pairs, int max_frames) {
  auto net = model::PrefNet<double>::initialised(spec, seed);
  Rng rng(derive_seed(seed, "gradcheck-inputs"));
  struct Item {
    Mat<double> a, b;
    double label;
  };
  std::vector<Item> items;
  auto random_mel = [&] {
    const auto frames = static_cast<Eigen::Index>(1 + rng.below(static_cast<std::uint64_t>(max_frames)));
    Mat<double> m(frames, spec.n_mels);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };
  for (int k = 0; k < n_pairs; ++k) {
    Mat<double> a = random_mel();
    Mat<double> b = random_mel();
    items.push_back({std::move(a), std::move(b), rng.uniform()});
  }

  model::PairTape<double> tape;
  auto loss = [&] {
    double sum = 0.0;
    for (const auto& it : items) {
      const double phi = net.forward(it.a, -1, it.b, -1, tape);
      sum += (phi - it.label) * (phi - it.label);
    }
    return sum / static_cast<double>(items.size());
  };

  net.zero_grad();
  for (const auto& it : items) {
    const double phi = net.forward(it.a, -1, it.b, -1, tape);
    net.backward(tape, 2.0 * (phi - it.label) / static_cast<double>(items.size()));
  }
  std::vector<nn::GradVariable> vars;
  for (auto& p : net.parameters()) vars.push_back({p.name, &p.value, p.grad});
  return nn::grad_check(vars, loss);
}

}  // namespace prefnet::training
