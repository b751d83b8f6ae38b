// SPDX-License-Identifier: Apache-2.0
#include "prefnet/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"

namespace prefnet::model {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::attention: return "attention";
    case Variant::gru1: return "gru1";
    case Variant::gru2: return "gru2";
    case Variant::gru3: return "gru3";
    case Variant::gru4: return "gru4";
  }
  return "unknown";
}

std::string_view to_string(Pooling p) { return p == Pooling::last ? "last" : "mean"; }

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::attention, Variant::gru1, Variant::gru2, Variant::gru3, Variant::gru4}) {
    if (to_string(v) == name) return v;
  }
  throw DataError("unknown model variant '" + std::string(name) + "'");
}

ModelSpec ModelSpec::defaults(Variant v) {
  ModelSpec s;
  s.variant = v;
  if (v == Variant::attention) {
    s.conv_layers = {{3, 3}, {3, 1}, {3, 1}, {3, 1}};
    s.pooling = Pooling::mean;
    s.bidirectional = false;
  } else {
    s.conv_layers = {{9, 1}, {9, 1}};
    s.pooling = (v == Variant::gru1 || v == Variant::gru2) ? Pooling::last : Pooling::mean;
    s.bidirectional = v == Variant::gru4;
  }
  return s;
}

ModelSpec ModelSpec::tiny(Variant v, int n_mels) {
  ModelSpec s = defaults(v);
  s.n_mels = n_mels;
  s.channels = 4;
  s.gru_hidden = 4;
  s.key_dim = 4;
  s.value_dim = 4;
  return s;
}

int ModelSpec::distance_dim() const {
  if (uses_attention()) return value_dim;
  return gru_hidden * (bidirectional ? 2 : 1);
}

void ModelSpec::validate() const {
  if (n_mels < 1 || channels < 1) throw DataError("model spec: n_mels and channels must be positive");
  if (conv_layers.empty()) throw DataError("model spec: encoder needs at least one conv layer");
  for (const auto& c : conv_layers) {
    if (c.width < 1 || c.width % 2 == 0 || c.dilation < 1) {
      throw DataError("model spec: conv widths must be odd and dilations positive");
    }
  }
  if (uses_attention()) {
    if (key_dim < 1 || value_dim < 1) throw DataError("model spec: key/value dims must be positive");
  } else if (gru_hidden < 1) {
    throw DataError("model spec: gru_hidden must be positive");
  }
  if (bidirectional && uses_attention()) {
    throw DataError("model spec: bidirectional applies to GRU variants only");
  }
}

json spec_to_json(const ModelSpec& s) {
  json layers = json::array();
  for (const auto& c : s.conv_layers) layers.push_back({{"width", c.width}, {"dilation", c.dilation}});
  return {{"variant", to_string(s.variant)},
          {"n_mels", s.n_mels},
          {"channels", s.channels},
          {"conv_layers", layers},
          {"key_dim", s.key_dim},
          {"value_dim", s.value_dim},
          {"gru_hidden", s.gru_hidden},
          {"pooling", to_string(s.pooling)},
          {"bidirectional", s.bidirectional},
          {"head_input_dim", s.distance_dim()}};
}

ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.n_mels = j.at("n_mels").get<int>();
    s.channels = j.at("channels").get<int>();
    for (const auto& c : j.at("conv_layers")) {
      s.conv_layers.push_back({c.at("width").get<int>(), c.at("dilation").get<int>()});
    }
    s.key_dim = j.at("key_dim").get<int>();
    s.value_dim = j.at("value_dim").get<int>();
    s.gru_hidden = j.at("gru_hidden").get<int>();
    const auto pooling = j.at("pooling").get<std::string>();
    if (pooling != "last" && pooling != "mean") throw DataError("unknown pooling '" + pooling + "'");
    s.pooling = pooling == "last" ? Pooling::last : Pooling::mean;
    s.bidirectional = j.at("bidirectional").get<bool>();
    s.validate();
    if (j.contains("head_input_dim") && j["head_input_dim"].get<int>() != s.distance_dim()) {
      throw DataError("head_input_dim disagrees with the layout");
    }
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("model spec: ") + e.what());
  }
}

namespace {

template <typename T>
Mat<T> as_row_matrix(const RowVec<T>& v) {
  return Mat<T>(v);
}

// Shared by the free function and the model: kv rows are [K | V] for valid frames.
template <typename T>
RowVec<T> attend(const Mat<T>& kv_a, const Mat<T>& kv_b, int key_dim, Mat<T>& weights) {
  const Eigen::Index value_dim = kv_a.cols() - key_dim;
  const Mat<T> scores = kv_a.leftCols(key_dim) * kv_b.leftCols(key_dim).transpose();
  weights = nn::joint_softmax(scores);
  const RowVec<T> row_mass = weights.rowwise().sum().transpose();
  const RowVec<T> col_mass = weights.colwise().sum();
  return row_mass * kv_a.rightCols(value_dim) - col_mass * kv_b.rightCols(value_dim);
}

template <typename T>
Eigen::Index resolve_valid(Eigen::Index valid, Eigen::Index rows, const char* what) {
  if (valid < 0) valid = rows;
  if (valid < 1 || valid > rows) {
    throw ShapeError(std::string(what) + ": valid length must be in [1, rows]");
  }
  return valid;
}

}  // namespace

template <typename T>
RowVec<T> attention_distance(const Mat<T>& enc_a, const Mat<T>& enc_b, const Mat<T>& proj_weight,
                             const Mat<T>& proj_bias, int key_dim, Eigen::Index valid_a,
                             Eigen::Index valid_b, Mat<T>* attention) {
  if (enc_a.cols() != enc_b.cols()) throw ShapeError("attention_distance: channel mismatch");
  if (key_dim < 1 || key_dim >= proj_weight.cols()) {
    throw ShapeError("attention_distance: projection must produce keys and values");
  }
  valid_a = resolve_valid<T>(valid_a, enc_a.rows(), "attention_distance");
  valid_b = resolve_valid<T>(valid_b, enc_b.rows(), "attention_distance");
  const Mat<T> kv_a = nn::affine<T>(enc_a.topRows(valid_a), proj_weight, proj_bias);
  const Mat<T> kv_b = nn::affine<T>(enc_b.topRows(valid_b), proj_weight, proj_bias);
  Mat<T> weights;
  RowVec<T> d = attend(kv_a, kv_b, key_dim, weights);
  if (attention) {
    attention->setZero(enc_a.rows(), enc_b.rows());
    attention->topLeftCorner(valid_a, valid_b) = weights;
  }
  return d;
}

namespace {

template <typename T>
RowVec<T> pool_sequence(const Mat<T>& seq, Pooling pooling, bool backward_direction) {
  if (pooling == Pooling::mean) return seq.colwise().mean();
  // "last" is the final state in processing order
  return backward_direction ? RowVec<T>(seq.row(0)) : RowVec<T>(seq.row(seq.rows() - 1));
}

template <typename T>
RowVec<T> gru_summary(const Mat<T>& enc, const nn::GruWeights<T>& forward,
                      const nn::GruWeights<T>* backward, Pooling pooling) {
  const RowVec<T> h0 = RowVec<T>::Zero(forward.hidden_size());
  const RowVec<T> f = pool_sequence<T>(nn::gru_sequence(enc, forward, h0, false), pooling, false);
  if (!backward) return f;
  const RowVec<T> hb = RowVec<T>::Zero(backward->hidden_size());
  const RowVec<T> b = pool_sequence<T>(nn::gru_sequence(enc, *backward, hb, true), pooling, true);
  RowVec<T> both(f.size() + b.size());
  both << f, b;
  return both;
}

}  // namespace

template <typename T>
RowVec<T> gru_distance(const Mat<T>& enc_a, const Mat<T>& enc_b, const nn::GruWeights<T>& forward,
                       const nn::GruWeights<T>* backward, Pooling pooling, Eigen::Index valid_a,
                       Eigen::Index valid_b) {
  valid_a = resolve_valid<T>(valid_a, enc_a.rows(), "gru_distance");
  valid_b = resolve_valid<T>(valid_b, enc_b.rows(), "gru_distance");
  const Mat<T> a = enc_a.topRows(valid_a);
  const Mat<T> b = enc_b.topRows(valid_b);
  return gru_summary(a, forward, backward, pooling) - gru_summary(b, forward, backward, pooling);
}

// ---------------------------------------------------------------------------

template <typename T>
void PrefNet<T>::add_parameter(std::string name, Eigen::Index rows, Eigen::Index cols,
                               std::size_t& slot) {
  slot = params_.size();
  params_.push_back({std::move(name), Mat<T>::Zero(rows, cols), Mat<T>::Zero(rows, cols)});
}

template <typename T>
PrefNet<T>::PrefNet(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  int in = spec_.n_mels;
  for (std::size_t i = 0; i < spec_.conv_layers.size(); ++i) {
    const auto prefix = "encoder.conv" + std::to_string(i);
    layout_.conv_kernel.push_back(0);
    layout_.conv_bias.push_back(0);
    add_parameter(prefix + ".kernel", spec_.conv_layers[i].width * in, spec_.channels,
                  layout_.conv_kernel.back());
    add_parameter(prefix + ".bias", 1, spec_.channels, layout_.conv_bias.back());
    in = spec_.channels;
  }
  if (spec_.uses_attention()) {
    add_parameter("attention.proj.weight", spec_.channels, spec_.key_dim + spec_.value_dim,
                  layout_.proj_weight);
    add_parameter("attention.proj.bias", 1, spec_.key_dim + spec_.value_dim, layout_.proj_bias);
  } else {
    const int h = spec_.gru_hidden;
    add_parameter("gru.fwd.input", spec_.channels, 3 * h, layout_.fwd_input);
    add_parameter("gru.fwd.hidden", h, 3 * h, layout_.fwd_hidden);
    add_parameter("gru.fwd.bias", 1, 3 * h, layout_.fwd_bias);
    if (spec_.bidirectional) {
      add_parameter("gru.bwd.input", spec_.channels, 3 * h, layout_.bwd_input);
      add_parameter("gru.bwd.hidden", h, 3 * h, layout_.bwd_hidden);
      add_parameter("gru.bwd.bias", 1, 3 * h, layout_.bwd_bias);
    }
  }
  add_parameter("head.weight", spec_.distance_dim(), 1, layout_.head_weight);
  add_parameter("head.bias", 1, 1, layout_.head_bias);
}

template <typename T>
PrefNet<T> PrefNet<T>::initialised(ModelSpec spec, std::uint64_t seed) {
  PrefNet net(std::move(spec));
  net.initialise(seed);
  return net;
}

template <typename T>
void PrefNet<T>::initialise(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  // fan_in of a weight is its row count; a bias shares the fan_in of its weight
  Eigen::Index fan_in = 1;
  for (auto& p : params_) {
    const bool is_bias = p.value.rows() == 1 && p.name.ends_with("bias");
    if (!is_bias) fan_in = p.value.rows();
    if (p.name == "gru.fwd.bias" || p.name == "gru.bwd.bias") fan_in = spec_.gru_hidden;
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<T>(rng.uniform(-a, a));
    }
  }
}

template <typename T>
Parameter<T>& PrefNet<T>::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Parameter<T>& PrefNet<T>::parameter(std::string_view name) const {
  return const_cast<PrefNet*>(this)->parameter(name);
}

template <typename T>
std::size_t PrefNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

template <typename T>
void PrefNet<T>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename T>
nn::GruWeights<T> PrefNet<T>::gru_weights(bool backward_direction) const {
  if (backward_direction) {
    return {value(layout_.bwd_input), value(layout_.bwd_hidden), value(layout_.bwd_bias)};
  }
  return {value(layout_.fwd_input), value(layout_.fwd_hidden), value(layout_.fwd_bias)};
}

template <typename T>
Mat<T> PrefNet<T>::encode(const Mat<T>& mel, Eigen::Index valid) const {
  if (mel.cols() != spec_.n_mels) {
    throw ShapeError("encode: expected " + std::to_string(spec_.n_mels) + " mel bins, got " +
                     std::to_string(mel.cols()));
  }
  valid = resolve_valid<T>(valid, mel.rows(), "encode");
  Mat<T> x = mel.topRows(valid);
  for (std::size_t l = 0; l < spec_.conv_layers.size(); ++l) {
    const auto& c = spec_.conv_layers[l];
    x = nn::relu<T>(nn::conv1d<T>(x, value(layout_.conv_kernel[l]), value(layout_.conv_bias[l]),
                                  {c.width, c.dilation}));
  }
  return x;
}

template <typename T>
RowVec<T> PrefNet<T>::pool(const Mat<T>& seq, bool backward_direction) const {
  return pool_sequence<T>(seq, spec_.pooling, backward_direction);
}

template <typename T>
void PrefNet<T>::pool_backward(const RowVec<T>& d_pooled, Eigen::Index n, bool backward_direction,
                               Mat<T>& d_seq) const {
  d_seq.setZero(n, d_pooled.size());
  if (spec_.pooling == Pooling::mean) {
    d_seq.rowwise() = d_pooled / static_cast<T>(n);
  } else {
    d_seq.row(backward_direction ? 0 : n - 1) = d_pooled;
  }
}

template <typename T>
void PrefNet<T>::run_tower(const Mat<T>& mel, Eigen::Index valid, TowerTape<T>& tape) const {
  if (mel.cols() != spec_.n_mels) {
    throw ShapeError("expected " + std::to_string(spec_.n_mels) + " mel bins, got " +
                     std::to_string(mel.cols()));
  }
  valid = resolve_valid<T>(valid, mel.rows(), "forward");
  tape.input = mel.topRows(valid);
  tape.conv_out.clear();
  tape.parameter_storage.clear();
  const Mat<T>* x = &tape.input;
  for (std::size_t l = 0; l < spec_.conv_layers.size(); ++l) {
    const auto& c = spec_.conv_layers[l];
    const auto& kernel = value(layout_.conv_kernel[l]);
    const auto& bias = value(layout_.conv_bias[l]);
    tape.parameter_storage.push_back(kernel.data());
    tape.parameter_storage.push_back(bias.data());
    tape.conv_out.push_back(nn::relu<T>(nn::conv1d<T>(*x, kernel, bias, {c.width, c.dilation})));
    x = &tape.conv_out.back();
  }
  if (spec_.uses_attention()) {
    const auto& w = value(layout_.proj_weight);
    const auto& b = value(layout_.proj_bias);
    tape.parameter_storage.push_back(w.data());
    tape.parameter_storage.push_back(b.data());
    tape.keys_values = nn::affine<T>(*x, w, b);
    return;
  }
  const RowVec<T> h0 = RowVec<T>::Zero(spec_.gru_hidden);
  const auto fwd = gru_weights(false);
  for (const auto* m : {&fwd.input, &fwd.hidden, &fwd.bias}) tape.parameter_storage.push_back(m->data());
  tape.fwd_out = nn::gru_sequence<T>(*x, fwd, h0, false, &tape.fwd_trace);
  tape.pooled = pool(tape.fwd_out, false);
  if (spec_.bidirectional) {
    const auto bwd = gru_weights(true);
    for (const auto* m : {&bwd.input, &bwd.hidden, &bwd.bias}) tape.parameter_storage.push_back(m->data());
    tape.bwd_out = nn::gru_sequence<T>(*x, bwd, h0, true, &tape.bwd_trace);
    const RowVec<T> back = pool(tape.bwd_out, true);
    RowVec<T> both(tape.pooled.size() + back.size());
    both << tape.pooled, back;
    tape.pooled = std::move(both);
  }
}

template <typename T>
T PrefNet<T>::head(const RowVec<T>& d) const {
  return (d * value(layout_.head_weight))(0, 0) + value(layout_.head_bias)(0, 0);
}

template <typename T>
T PrefNet<T>::forward(const Mat<T>& mel_a, Eigen::Index valid_a, const Mat<T>& mel_b,
                      Eigen::Index valid_b, PairTape<T>& tape) const {
  run_tower(mel_a, valid_a, tape.a);
  run_tower(mel_b, valid_b, tape.b);
  if (spec_.uses_attention()) {
    tape.distance = attend(tape.a.keys_values, tape.b.keys_values, spec_.key_dim, tape.attention);
  } else {
    tape.distance = tape.a.pooled - tape.b.pooled;
  }
  tape.logit = spec_.anti_symmetric() ? head(tape.distance) - head(-tape.distance)
                                      : head(tape.distance);
  tape.probability = nn::sigmoid(tape.logit);
  return tape.probability;
}

template <typename T>
void PrefNet<T>::backward_tower(const TowerTape<T>& tape, const Mat<T>& d_encoded) {
  Mat<T> d = d_encoded;
  for (std::size_t l = spec_.conv_layers.size(); l-- > 0;) {
    const auto& c = spec_.conv_layers[l];
    const Mat<T> dy = nn::relu_backward<T>(tape.conv_out[l], d);
    const Mat<T>& input = l == 0 ? tape.input : tape.conv_out[l - 1];
    auto& kernel = params_[layout_.conv_kernel[l]];
    auto& bias = params_[layout_.conv_bias[l]];
    Mat<T> dx;
    nn::conv1d_backward<T>(input, kernel.value, {c.width, c.dilation}, dy, l > 0 ? &dx : nullptr,
                           kernel.grad, bias.grad);
    d = std::move(dx);
  }
}

template <typename T>
void PrefNet<T>::backward(const PairTape<T>& tape, T dloss_dprob) {
  const T p = tape.probability;
  const Mat<T> dlogit = Mat<T>::Constant(1, 1, dloss_dprob * p * (T(1) - p));

  auto& hw = params_[layout_.head_weight];
  auto& hb = params_[layout_.head_bias];
  const Mat<T> d_row = as_row_matrix<T>(tape.distance);
  Mat<T> dd;
  nn::affine_backward<T>(d_row, hw.value, dlogit, &dd, hw.grad, hb.grad);
  if (spec_.anti_symmetric()) {
    // the f(-d) branch enters with a minus sign and receives -d
    Mat<T> dd_neg;
    nn::affine_backward<T>(-d_row, hw.value, -dlogit, &dd_neg, hw.grad, hb.grad);
    dd -= dd_neg;
  }
  const RowVec<T> d_dist = dd.row(0);

  Mat<T> d_enc_a, d_enc_b;
  if (spec_.uses_attention()) {
    const int kd = spec_.key_dim;
    const Eigen::Index vd = spec_.value_dim;
    const Mat<T>& kv_a = tape.a.keys_values;
    const Mat<T>& kv_b = tape.b.keys_values;
    const Mat<T>& w = tape.attention;
    const auto row_mass = w.rowwise().sum();
    const auto col_mass = w.colwise().sum().transpose();

    Mat<T> dkv_a(kv_a.rows(), kv_a.cols()), dkv_b(kv_b.rows(), kv_b.cols());
    dkv_a.rightCols(vd) = row_mass * d_dist;
    dkv_b.rightCols(vd) = -(col_mass * d_dist);
    const Eigen::Matrix<T, Eigen::Dynamic, 1> d_row_mass = kv_a.rightCols(vd) * d_dist.transpose();
    const Eigen::Matrix<T, Eigen::Dynamic, 1> d_col_mass = -(kv_b.rightCols(vd) * d_dist.transpose());
    Mat<T> dw = d_row_mass.replicate(1, w.cols());
    dw.rowwise() += d_col_mass.transpose();
    const Mat<T> ds = nn::joint_softmax_backward<T>(w, dw);
    dkv_a.leftCols(kd) = ds * kv_b.leftCols(kd);
    dkv_b.leftCols(kd) = ds.transpose() * kv_a.leftCols(kd);

    auto& pw = params_[layout_.proj_weight];
    auto& pb = params_[layout_.proj_bias];
    nn::affine_backward<T>(tape.a.encoded(), pw.value, dkv_a, &d_enc_a, pw.grad, pb.grad);
    nn::affine_backward<T>(tape.b.encoded(), pw.value, dkv_b, &d_enc_b, pw.grad, pb.grad);
  } else {
    const Eigen::Index h = spec_.gru_hidden;
    auto gru_back = [&](const TowerTape<T>& tw, const RowVec<T>& d_pooled, Mat<T>& d_enc) {
      Mat<T> d_seq;
      pool_backward(d_pooled.leftCols(h), tw.fwd_out.rows(), false, d_seq);
      nn::GruGrads<T> g{params_[layout_.fwd_input].grad, params_[layout_.fwd_hidden].grad,
                        params_[layout_.fwd_bias].grad};
      nn::gru_backward<T>(tw.encoded(), gru_weights(false), tw.fwd_trace, d_seq, &d_enc, g);
      if (spec_.bidirectional) {
        pool_backward(d_pooled.rightCols(h), tw.bwd_out.rows(), true, d_seq);
        nn::GruGrads<T> gb{params_[layout_.bwd_input].grad, params_[layout_.bwd_hidden].grad,
                           params_[layout_.bwd_bias].grad};
        Mat<T> d_enc_bwd;
        nn::gru_backward<T>(tw.encoded(), gru_weights(true), tw.bwd_trace, d_seq, &d_enc_bwd, gb);
        d_enc += d_enc_bwd;
      }
    };
    gru_back(tape.a, d_dist, d_enc_a);
    gru_back(tape.b, -d_dist, d_enc_b);
  }
  backward_tower(tape.a, d_enc_a);
  backward_tower(tape.b, d_enc_b);
}

template <typename T>
RowVec<T> PrefNet<T>::distance(const Mat<T>& mel_a, const Mat<T>& mel_b) const {
  PairTape<T> tape;
  forward(mel_a, -1, mel_b, -1, tape);
  return tape.distance;
}

template <typename T>
T PrefNet<T>::logit(const Mat<T>& mel_a, const Mat<T>& mel_b) const {
  PairTape<T> tape;
  forward(mel_a, -1, mel_b, -1, tape);
  return tape.logit;
}

template <typename T>
T PrefNet<T>::probability(const Mat<T>& mel_a, const Mat<T>& mel_b) const {
  PairTape<T> tape;
  return forward(mel_a, -1, mel_b, -1, tape);
}

template <typename T>
T PrefNet<T>::predict(const Mat<T>& mel_a, const Mat<T>& mel_b) const {
  if (!spec_.anti_symmetric()) {
    throw DataError("predict: variant gru1 has no anti-symmetric head; use predict_baseline_gru1");
  }
  return probability(mel_a, mel_b);
}

template <typename T>
T PrefNet<T>::predict_baseline_gru1(const Mat<T>& mel_a, const Mat<T>& mel_b) const {
  if (spec_.variant != Variant::gru1) throw DataError("predict_baseline_gru1: model is not gru1");
  return probability(mel_a, mel_b);
}

template class PrefNet<float>;
template class PrefNet<double>;

template RowVec<float> attention_distance<float>(const Mat<float>&, const Mat<float>&,
                                                 const Mat<float>&, const Mat<float>&, int,
                                                 Eigen::Index, Eigen::Index, Mat<float>*);
template RowVec<double> attention_distance<double>(const Mat<double>&, const Mat<double>&,
                                                   const Mat<double>&, const Mat<double>&, int,
                                                   Eigen::Index, Eigen::Index, Mat<double>*);
template RowVec<float> gru_distance<float>(const Mat<float>&, const Mat<float>&,
                                           const nn::GruWeights<float>&,
                                           const nn::GruWeights<float>*, Pooling, Eigen::Index,
                                           Eigen::Index);
template RowVec<double> gru_distance<double>(const Mat<double>&, const Mat<double>&,
                                             const nn::GruWeights<double>&,
                                             const nn::GruWeights<double>*, Pooling, Eigen::Index,
                                             Eigen::Index);

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'P', 'R', 'F', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxHeader = 64u << 20;

// tensor data is copied straight from memory as little-endian float32
static_assert(std::endian::native == std::endian::little);

}  // namespace

void save_checkpoint(const PrefNet<float>& model, const TrainingMetadata& meta, const fs::path& path) {
  json tensors = json::array();
  for (const auto& p : model.parameters()) {
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  json header;
  header["format_version"] = kCheckpointVersion;
  header["spec"] = spec_to_json(model.spec());
  header["gru_update"] = "h = (1 - z) * h_prev + z * candidate";
  header["tensors"] = tensors;
  header["metadata"] = {{"seed", meta.seed},
                        {"epochs_run", meta.epochs_run},
                        {"best_val_loss", meta.best_val_loss ? json(*meta.best_val_loss) : json()}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters()) {
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path, std::optional<Variant> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  const std::string what = "checkpoint " + path.string();
  if (detail::get_bytes(in, sizeof(kMagic), what) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError(what + ": not a checkpoint (bad magic)");
  }
  const auto version = detail::get_le<std::uint32_t>(in, what);
  if (version != kCheckpointVersion) {
    throw DataError(what + ": format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  const auto header_len = detail::get_le<std::uint64_t>(in, what);
  if (header_len > kMaxHeader) throw DataError(what + ": corrupt header length");
  json header;
  try {
    header = json::parse(detail::get_bytes(in, header_len, what));
  } catch (const json::parse_error& e) {
    throw DataError(what + ": corrupt header (" + e.what() + ")");
  }

  ModelSpec spec;
  TrainingMetadata meta;
  try {
    if (header.at("format_version").get<std::uint32_t>() != kCheckpointVersion) {
      throw DataError(what + ": header version mismatch");
    }
    spec = spec_from_json(header.at("spec"));
    const auto& m = header.at("metadata");
    meta.seed = m.at("seed").get<std::uint64_t>();
    meta.epochs_run = m.at("epochs_run").get<int>();
    if (!m.at("best_val_loss").is_null()) meta.best_val_loss = m["best_val_loss"].get<double>();
  } catch (const json::exception& e) {
    throw DataError(what + ": malformed header (" + e.what() + ")");
  }
  if (expected && *expected != spec.variant) {
    throw DataError(what + ": spec mismatch, checkpoint holds variant '" +
                    std::string(to_string(spec.variant)) + "' but '" +
                    std::string(to_string(*expected)) + "' was requested");
  }

  PrefNet<float> model(spec);
  const auto& tensors = header.at("tensors");
  if (!tensors.is_array() || tensors.size() != model.parameters().size()) {
    throw DataError(what + ": tensor index does not match the model spec");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& p = model.parameters()[i];
    const auto& t = tensors[i];
    if (t.value("name", "") != p.name || t.value("rows", -1) != p.value.rows() ||
        t.value("cols", -1) != p.value.cols()) {
      throw DataError(what + ": tensor '" + p.name + "' has the wrong name or shape");
    }
    const auto bytes = static_cast<std::streamsize>(p.value.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(p.value.data()), bytes);
    if (in.gcount() != bytes) throw DataError(what + ": truncated tensor data (corrupt file)");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes (corrupt file)");
  return {std::move(model), meta};
}

}  // namespace prefnet::model
