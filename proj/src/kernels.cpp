// SPDX-License-Identifier: Apache-2.0
#include "prefnet/kernels.hpp"

#include <algorithm>

namespace prefnet::nn {

namespace {

std::string dims(Eigen::Index r, Eigen::Index c) {
  return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
}

template <typename T>
void require_shape(const Mat<T>& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + dims(rows, cols) + ", got " +
                     dims(m.rows(), m.cols()));
  }
}

}  // namespace

template <typename T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& weight, const Mat<T>& bias) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("affine: input " + dims(x.rows(), x.cols()) + " does not match weight " +
                     dims(weight.rows(), weight.cols()));
  }
  require_shape(bias, 1, weight.cols(), "affine bias");
  Mat<T> y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

template <typename T>
void affine_backward(const Mat<T>& x, const Mat<T>& weight, const Mat<T>& dy, Mat<T>* dx,
                     Mat<T>& dweight, Mat<T>& dbias) {
  require_shape(dy, x.rows(), weight.cols(), "affine_backward dy");
  dweight.noalias() += x.transpose() * dy;
  dbias += dy.colwise().sum();
  if (dx) *dx = dy * weight.transpose();
}

template <typename T>
Mat<T> relu(const Mat<T>& x) {
  return x.cwiseMax(T(0));
}

template <typename T>
Mat<T> relu_backward(const Mat<T>& y, const Mat<T>& dy) {
  return (y.array() > T(0)).select(dy, T(0));
}

namespace {

// (N, width * C_in) matrix of shifted input frames.
template <typename T>
Mat<T> unfold(const Mat<T>& x, ConvGeometry g) {
  const Eigen::Index n = x.rows(), c_in = x.cols();
  Mat<T> cols = Mat<T>::Zero(n, g.width * c_in);
  for (int j = 0; j < g.width; ++j) {
    const Eigen::Index shift = static_cast<Eigen::Index>(j - g.width / 2) * g.dilation;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
    if (hi > lo) cols.block(lo, j * c_in, hi - lo, c_in) = x.middleRows(lo + shift, hi - lo);
  }
  return cols;
}

void check_geometry(ConvGeometry g) {
  if (g.width < 1 || g.width % 2 == 0) throw ShapeError("conv1d: kernel width must be odd");
  if (g.dilation < 1) throw ShapeError("conv1d: dilation must be positive");
}

}  // namespace

template <typename T>
Mat<T> conv1d(const Mat<T>& x, const Mat<T>& kernel, const Mat<T>& bias, ConvGeometry geom) {
  check_geometry(geom);
  if (kernel.rows() != geom.width * x.cols()) {
    throw ShapeError("conv1d: kernel " + dims(kernel.rows(), kernel.cols()) + " does not match " +
                     std::to_string(geom.width) + " taps of " + std::to_string(x.cols()) +
                     " input channels");
  }
  require_shape(bias, 1, kernel.cols(), "conv1d bias");
  Mat<T> y = unfold(x, geom) * kernel;
  y.rowwise() += bias.row(0);
  return y;
}

template <typename T>
void conv1d_backward(const Mat<T>& x, const Mat<T>& kernel, ConvGeometry geom, const Mat<T>& dy,
                     Mat<T>* dx, Mat<T>& dkernel, Mat<T>& dbias) {
  check_geometry(geom);
  require_shape(dy, x.rows(), kernel.cols(), "conv1d_backward dy");
  dkernel.noalias() += unfold(x, geom).transpose() * dy;
  dbias += dy.colwise().sum();
  if (!dx) return;
  const Mat<T> dcols = dy * kernel.transpose();
  const Eigen::Index n = x.rows(), c_in = x.cols();
  dx->setZero(n, c_in);
  for (int j = 0; j < geom.width; ++j) {
    const Eigen::Index shift = static_cast<Eigen::Index>(j - geom.width / 2) * geom.dilation;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(n, n - shift);
    if (hi > lo) dx->middleRows(lo + shift, hi - lo) += dcols.block(lo, j * c_in, hi - lo, c_in);
  }
}

template <typename T>
Mat<T> gru_sequence(const Mat<T>& x, const GruWeights<T>& w, const RowVec<T>& h0, bool reverse,
                    GruTrace<T>* trace) {
  const Eigen::Index n = x.rows(), hs = w.hidden_size();
  require_shape(w.input, x.cols(), 3 * hs, "gru input weights");
  require_shape(w.hidden, hs, 3 * hs, "gru hidden weights");
  require_shape(w.bias, 1, 3 * hs, "gru bias");
  if (h0.size() != hs) throw ShapeError("gru: initial state has the wrong size");

  Mat<T> proj = x * w.input;
  proj.rowwise() += w.bias.row(0);
  const auto u_gates = w.hidden.leftCols(2 * hs);
  const auto u_cand = w.hidden.rightCols(hs);

  Mat<T> out(n, hs);
  if (trace) {
    trace->h_prev.resize(n, hs);
    trace->update.resize(n, hs);
    trace->reset.resize(n, hs);
    trace->candidate.resize(n, hs);
    trace->reverse = reverse;
  }
  RowVec<T> h = h0;
  for (Eigen::Index s = 0; s < n; ++s) {
    const Eigen::Index t = reverse ? n - 1 - s : s;
    const RowVec<T> gates = proj.row(t).leftCols(2 * hs) + h * u_gates;
    const RowVec<T> z = gates.leftCols(hs).unaryExpr([](T v) { return sigmoid(v); });
    const RowVec<T> r = gates.rightCols(hs).unaryExpr([](T v) { return sigmoid(v); });
    const RowVec<T> rh = r.cwiseProduct(h);
    const RowVec<T> c = (proj.row(t).rightCols(hs) + rh * u_cand).array().tanh().matrix();
    if (trace) {
      trace->h_prev.row(t) = h;
      trace->update.row(t) = z;
      trace->reset.row(t) = r;
      trace->candidate.row(t) = c;
    }
    h = (T(1) - z.array()) * h.array() + z.array() * c.array();
    out.row(t) = h;
  }
  return out;
}

template <typename T>
void gru_backward(const Mat<T>& x, const GruWeights<T>& w, const GruTrace<T>& trace,
                  const Mat<T>& dout, Mat<T>* dx, GruGrads<T> grads, RowVec<T>* dh0) {
  const Eigen::Index n = x.rows(), hs = w.hidden_size();
  require_shape(dout, n, hs, "gru_backward dout");
  const auto u_gates = w.hidden.leftCols(2 * hs);
  const auto u_cand = w.hidden.rightCols(hs);

  Mat<T> dproj(n, 3 * hs);
  RowVec<T> dh = RowVec<T>::Zero(hs);
  for (Eigen::Index s = n - 1; s >= 0; --s) {
    const Eigen::Index t = trace.reverse ? n - 1 - s : s;
    dh += dout.row(t);
    const RowVec<T> hp = trace.h_prev.row(t);
    const RowVec<T> z = trace.update.row(t);
    const RowVec<T> r = trace.reset.row(t);
    const RowVec<T> c = trace.candidate.row(t);

    const RowVec<T> dz = dh.cwiseProduct(c - hp);
    RowVec<T> dhp = dh.cwiseProduct((T(1) - z.array()).matrix());
    const RowVec<T> dc_pre = (dh.array() * z.array() * (T(1) - c.array().square())).matrix();

    const RowVec<T> rh = r.cwiseProduct(hp);
    grads.hidden.rightCols(hs).noalias() += rh.transpose() * dc_pre;
    const RowVec<T> drh = dc_pre * u_cand.transpose();
    const RowVec<T> dr = drh.cwiseProduct(hp);
    dhp += drh.cwiseProduct(r);

    RowVec<T> dgates(2 * hs);
    dgates.leftCols(hs) = (dz.array() * z.array() * (T(1) - z.array())).matrix();
    dgates.rightCols(hs) = (dr.array() * r.array() * (T(1) - r.array())).matrix();
    grads.hidden.leftCols(2 * hs).noalias() += hp.transpose() * dgates;
    dhp.noalias() += dgates * u_gates.transpose();

    dproj.row(t).leftCols(2 * hs) = dgates;
    dproj.row(t).rightCols(hs) = dc_pre;
    dh = dhp;
  }
  grads.input.noalias() += x.transpose() * dproj;
  grads.bias += dproj.colwise().sum();
  if (dx) *dx = dproj * w.input.transpose();
  if (dh0) *dh0 = dh;
}

template <typename T>
Mat<T> joint_softmax(const Mat<T>& scores, Eigen::Index valid_rows, Eigen::Index valid_cols) {
  const Eigen::Index rows = valid_rows < 0 ? scores.rows() : valid_rows;
  const Eigen::Index cols = valid_cols < 0 ? scores.cols() : valid_cols;
  if (rows == 0 || cols == 0) throw ShapeError("joint_softmax: empty matrix");
  if (rows > scores.rows() || cols > scores.cols()) {
    throw ShapeError("joint_softmax: valid region exceeds the matrix");
  }
  const auto block = scores.topLeftCorner(rows, cols);
  const T shift = block.maxCoeff();
  Mat<T> w = Mat<T>::Zero(scores.rows(), scores.cols());
  w.topLeftCorner(rows, cols) = (block.array() - shift).exp().matrix();
  w /= w.sum();
  return w;
}

template <typename T>
Mat<T> joint_softmax_backward(const Mat<T>& weights, const Mat<T>& dweights) {
  require_shape(dweights, weights.rows(), weights.cols(), "joint_softmax_backward");
  const T inner = weights.cwiseProduct(dweights).sum();
  return (weights.array() * (dweights.array() - inner)).matrix();
}

GradCheckReport grad_check(std::span<GradVariable> variables, const std::function<double()>& loss,
                           double epsilon) {
  GradCheckReport report;
  for (auto& var : variables) {
    Mat<double>& value = *var.value;
    if (var.analytic.rows() != value.rows() || var.analytic.cols() != value.cols()) {
      throw ShapeError("grad_check: analytic gradient of '" + var.name + "' has the wrong shape");
    }
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      value.data()[i] = original + epsilon;
      const double up = loss();
      value.data()[i] = original - epsilon;
      const double down = loss();
      value.data()[i] = original;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = var.analytic.data()[i];
      const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      const double err = std::abs(analytic - numeric) / scale;
      ++report.n_checked;
      if (!(err <= report.max_rel_error)) {
        report.max_rel_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
        report.worst_variable = var.name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

#define PREFNET_INSTANTIATE_KERNELS(T)                                                          \
  template Mat<T> affine<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&);                      \
  template void affine_backward<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, Mat<T>*,        \
                                   Mat<T>&, Mat<T>&);                                          \
  template Mat<T> relu<T>(const Mat<T>&);                                                      \
  template Mat<T> relu_backward<T>(const Mat<T>&, const Mat<T>&);                              \
  template Mat<T> conv1d<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&, ConvGeometry);        \
  template void conv1d_backward<T>(const Mat<T>&, const Mat<T>&, ConvGeometry, const Mat<T>&,  \
                                   Mat<T>*, Mat<T>&, Mat<T>&);                                 \
  template Mat<T> gru_sequence<T>(const Mat<T>&, const GruWeights<T>&, const RowVec<T>&, bool, \
                                  GruTrace<T>*);                                               \
  template void gru_backward<T>(const Mat<T>&, const GruWeights<T>&, const GruTrace<T>&,       \
                                const Mat<T>&, Mat<T>*, GruGrads<T>, RowVec<T>*);              \
  template Mat<T> joint_softmax<T>(const Mat<T>&, Eigen::Index, Eigen::Index);                 \
  template Mat<T> joint_softmax_backward<T>(const Mat<T>&, const Mat<T>&);

PREFNET_INSTANTIATE_KERNELS(float)
PREFNET_INSTANTIATE_KERNELS(double)

#undef PREFNET_INSTANTIATE_KERNELS

}  // namespace prefnet::nn
