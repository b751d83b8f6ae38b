// SPDX-License-Identifier: Apache-2.0
/**
 * @file   model.hpp
 * @brief  Anti-symmetric twin preference networks and their checkpoints.
 *
 * Both stimuli pass through one shared encoder (stacked length-preserving
 * 1-D convolutions with ReLU). A scoring stage turns the two variable
 * length encodings into a difference vector d, and the head maps it to
 *
 *   phi(A, B) = sigmoid(f(d) - f(-d))      (attention, gru2, gru3, gru4)
 *   phi(A, B) = sigmoid(f(d))              (gru1, no anti-symmetry)
 *
 * with f a single affine layer. Since d(B, A) = -d(A, B), the first form
 * gives phi(B, A) = 1 - phi(A, B) for any weights.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefnet/common.hpp"
#include "prefnet/kernels.hpp"

namespace prefnet::model {

enum class Variant { attention, gru1, gru2, gru3, gru4 };
enum class Pooling { last, mean };

std::string_view to_string(Variant v);
std::string_view to_string(Pooling p);
Variant parse_variant(std::string_view name);

struct ConvLayerSpec {
  int width = 3;
  int dilation = 1;

  bool operator==(const ConvLayerSpec&) const = default;
};

struct ModelSpec {
  Variant variant = Variant::gru4;
  int n_mels = 64;
  int channels = 64;
  std::vector<ConvLayerSpec> conv_layers;
  int key_dim = 32;    ///< D, attention keys
  int value_dim = 32;  ///< E, attention values
  int gru_hidden = 64;
  Pooling pooling = Pooling::mean;
  bool bidirectional = false;

  /// Published layouts: attention = 4 convs (width 3, dilations 3,1,1,1),
  /// D = E = 32; gru* = 2 convs of width 9 and a 64-unit GRU.
  static ModelSpec defaults(Variant v);

  /// Same layout with 4 channels, 4 GRU units and D = E = 4.
  static ModelSpec tiny(Variant v, int n_mels = 6);

  bool uses_attention() const { return variant == Variant::attention; }
  bool anti_symmetric() const { return variant != Variant::gru1; }
  /// Length of d and input size of the head.
  int distance_dim() const;
  void validate() const;

  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
};

/// Activations of one input kept for the reverse pass.
template <typename T>
struct TowerTape {
  Mat<T> input;
  std::vector<Mat<T>> conv_out;  ///< post-ReLU output of every layer
  Mat<T> keys_values;            ///< attention only: (N, D + E)
  nn::GruTrace<T> fwd_trace, bwd_trace;
  Mat<T> fwd_out, bwd_out;
  RowVec<T> pooled;              ///< gru only
  std::vector<const T*> parameter_storage;  ///< every tensor the tower read

  const Mat<T>& encoded() const { return conv_out.back(); }
};

template <typename T>
struct PairTape {
  TowerTape<T> a, b;
  Mat<T> attention;  ///< (N_A, N_B), attention only
  RowVec<T> distance;
  T logit = 0;
  T probability = 0;
};

/**
 * Attention scoring: K, V = H(enc) for both inputs, W = joint softmax of
 * K_A K_B^T over the valid block, d = sum_ij (V_A[i] - V_B[j]) W[i, j].
 * Rows past valid_a / valid_b are padding and get zero attention.
 */
template <typename T>
RowVec<T> attention_distance(const Mat<T>& enc_a, const Mat<T>& enc_b, const Mat<T>& proj_weight,
                             const Mat<T>& proj_bias, int key_dim, Eigen::Index valid_a = -1,
                             Eigen::Index valid_b = -1, Mat<T>* attention = nullptr);

/// d = g(GRU(enc_a)) - g(GRU(enc_b)); bidirectional concatenates both directions' pooled states.
template <typename T>
RowVec<T> gru_distance(const Mat<T>& enc_a, const Mat<T>& enc_b, const nn::GruWeights<T>& forward,
                       const nn::GruWeights<T>* backward, Pooling pooling,
                       Eigen::Index valid_a = -1, Eigen::Index valid_b = -1);

template <typename T>
class PrefNet {
 public:
  /// All parameters zero.
  explicit PrefNet(ModelSpec spec);

  /// Uniform(-a, a) with a = sqrt(1 / fan_in), tensors drawn in storage order.
  static PrefNet initialised(ModelSpec spec, std::uint64_t seed);
  void initialise(std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::vector<Parameter<T>>& parameters() { return params_; }
  const std::vector<Parameter<T>>& parameters() const { return params_; }
  Parameter<T>& parameter(std::string_view name);
  const Parameter<T>& parameter(std::string_view name) const;
  std::size_t parameter_count() const;

  void zero_grad();

  template <typename U>
  PrefNet<U> cast() const {
    PrefNet<U> out(spec_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.parameters()[i].value = params_[i].value.template cast<U>();
    }
    return out;
  }

  /// Encoder output (N, channels) for the first `valid` frames (all when negative).
  Mat<T> encode(const Mat<T>& mel, Eigen::Index valid = -1) const;
  RowVec<T> distance(const Mat<T>& mel_a, const Mat<T>& mel_b) const;

  /// Pre-sigmoid score.
  T logit(const Mat<T>& mel_a, const Mat<T>& mel_b) const;
  /// Probability that A is preferred, using whichever head the variant has.
  T probability(const Mat<T>& mel_a, const Mat<T>& mel_b) const;
  /// Anti-symmetric variants only.
  T predict(const Mat<T>& mel_a, const Mat<T>& mel_b) const;
  /// gru1 only.
  T predict_baseline_gru1(const Mat<T>& mel_a, const Mat<T>& mel_b) const;

  /// Forward pass recording everything `backward` needs.
  T forward(const Mat<T>& mel_a, Eigen::Index valid_a, const Mat<T>& mel_b,
            Eigen::Index valid_b, PairTape<T>& tape) const;
  /// Accumulates d(loss)/d(theta) into every Parameter::grad given d(loss)/d(phi).
  void backward(const PairTape<T>& tape, T dloss_dprob);

 private:
  template <typename U>
  friend class PrefNet;

  struct Layout {
    std::vector<std::size_t> conv_kernel, conv_bias;
    std::size_t proj_weight = 0, proj_bias = 0;
    std::size_t fwd_input = 0, fwd_hidden = 0, fwd_bias = 0;
    std::size_t bwd_input = 0, bwd_hidden = 0, bwd_bias = 0;
    std::size_t head_weight = 0, head_bias = 0;
  };

  void add_parameter(std::string name, Eigen::Index rows, Eigen::Index cols, std::size_t& slot);
  const Mat<T>& value(std::size_t slot) const { return params_[slot].value; }
  nn::GruWeights<T> gru_weights(bool backward_direction) const;
  void run_tower(const Mat<T>& mel, Eigen::Index valid, TowerTape<T>& tape) const;
  void backward_tower(const TowerTape<T>& tape, const Mat<T>& d_encoded);
  RowVec<T> pool(const Mat<T>& seq, bool backward_direction) const;
  void pool_backward(const RowVec<T>& d_pooled, Eigen::Index n, bool backward_direction,
                     Mat<T>& d_seq) const;
  T head(const RowVec<T>& d) const;

  ModelSpec spec_;
  std::vector<Parameter<T>> params_;
  Layout layout_;
};

extern template class PrefNet<float>;
extern template class PrefNet<double>;

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  std::optional<double> best_val_loss;

  bool operator==(const TrainingMetadata&) const = default;
};

struct Checkpoint {
  PrefNet<float> model;
  TrainingMetadata metadata;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/**
 * Layout: 8-byte magic "PRFNCKPT", u32 format version, u64 header length,
 * JSON header (spec, tensor index, metadata), then every tensor as
 * row-major little-endian float32 in header order.
 */
void save_checkpoint(const PrefNet<float>& model, const TrainingMetadata& meta,
                     const std::filesystem::path& path);

/// Throws DataError on corruption, version mismatch, or a spec that differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<Variant> expected = std::nullopt);

}  // namespace prefnet::model
