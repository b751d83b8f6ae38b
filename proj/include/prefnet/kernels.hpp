// SPDX-License-Identifier: Apache-2.0
/**
 * @file   kernels.hpp
 * @brief  Differentiable building blocks with hand-written reverse passes.
 *
 * Every forward kernel has a matching `*_backward` that takes the upstream
 * gradient and accumulates (+=) into parameter gradients. Input gradients
 * are written (not accumulated) and may be skipped by passing nullptr.
 * Kernels are instantiated for float (training) and double (gradient checks).
 */
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>

#include "prefnet/common.hpp"

namespace prefnet::nn {

/// Logistic function that never evaluates exp of a large positive argument.
template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T tanh_act(T x) {
  return std::tanh(x);
}

/// y = x W + b, with x (N, I), W (I, O), b (1, O).
template <typename T>
Mat<T> affine(const Mat<T>& x, const Mat<T>& weight, const Mat<T>& bias);

template <typename T>
void affine_backward(const Mat<T>& x, const Mat<T>& weight, const Mat<T>& dy, Mat<T>* dx,
                     Mat<T>& dweight, Mat<T>& dbias);

template <typename T>
Mat<T> relu(const Mat<T>& x);

/// Gradient through ReLU given its output.
template <typename T>
Mat<T> relu_backward(const Mat<T>& y, const Mat<T>& dy);

struct ConvGeometry {
  int width = 1;     ///< odd
  int dilation = 1;

  int reach() const { return (width / 2) * dilation; }  ///< zero padding on each side
};

/**
 * Length-preserving 1-D convolution over time. x is (N, C_in); the kernel
 * is stored as (width * C_in, C_out) where row j * C_in + c holds tap j of
 * input channel c. Frames outside [0, N) read as zero.
 */
template <typename T>
Mat<T> conv1d(const Mat<T>& x, const Mat<T>& kernel, const Mat<T>& bias, ConvGeometry geom);

template <typename T>
void conv1d_backward(const Mat<T>& x, const Mat<T>& kernel, ConvGeometry geom, const Mat<T>& dy,
                     Mat<T>* dx, Mat<T>& dkernel, Mat<T>& dbias);

/**
 * GRU weights in row-vector form with gates packed as [z | r | candidate]:
 * input weights (I, 3H), hidden weights (H, 3H), bias (1, 3H).
 *
 *   z = sigmoid(x Wz + h Uz + bz)
 *   r = sigmoid(x Wr + h Ur + br)
 *   c = tanh(x Wc + (r * h) Uc + bc)
 *   h' = (1 - z) * h + z * c
 */
template <typename T>
struct GruWeights {
  const Mat<T>& input;
  const Mat<T>& hidden;
  const Mat<T>& bias;

  Eigen::Index hidden_size() const { return hidden.rows(); }
};

template <typename T>
struct GruGrads {
  Mat<T>& input;
  Mat<T>& hidden;
  Mat<T>& bias;
};

/// Per-step activations kept for the reverse pass, indexed by input row.
template <typename T>
struct GruTrace {
  Mat<T> h_prev;
  Mat<T> update;
  Mat<T> reset;
  Mat<T> candidate;
  bool reverse = false;
};

/// Runs the recurrence forward (or last-to-first) and returns (N, H) with row t = state after x_t.
template <typename T>
Mat<T> gru_sequence(const Mat<T>& x, const GruWeights<T>& w, const RowVec<T>& h0, bool reverse,
                    GruTrace<T>* trace = nullptr);

template <typename T>
void gru_backward(const Mat<T>& x, const GruWeights<T>& w, const GruTrace<T>& trace,
                  const Mat<T>& dout, Mat<T>* dx, GruGrads<T> grads, RowVec<T>* dh0 = nullptr);

/**
 * Softmax over every element at once. Only the top-left valid_rows x
 * valid_cols block takes part; everything else is exactly zero. Negative
 * counts mean "all".
 */
template <typename T>
Mat<T> joint_softmax(const Mat<T>& scores, Eigen::Index valid_rows = -1, Eigen::Index valid_cols = -1);

template <typename T>
Mat<T> joint_softmax_backward(const Mat<T>& weights, const Mat<T>& dweights);

/// One tensor under test: its storage and the reverse-mode gradient to compare.
struct GradVariable {
  std::string name;
  Mat<double>* value;
  Mat<double> analytic;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_variable;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t n_checked = 0;
};

/**
 * Central finite differences on every entry of every variable, against the
 * stored analytic gradients. Error per entry is
 * |g_ad - g_fd| / max(1, |g_ad|, |g_fd|); the report carries the maximum.
 * `loss` must recompute the scalar from the current variable values.
 */
GradCheckReport grad_check(std::span<GradVariable> variables, const std::function<double()>& loss,
                           double epsilon = 1e-5);

}  // namespace prefnet::nn
