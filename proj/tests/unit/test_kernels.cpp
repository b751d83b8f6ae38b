// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "prefnet/kernels.hpp"

using namespace prefnet;
using namespace prefnet::nn;

namespace {

Mat<double> random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_DOUBLE_EQ(sigmoid(800.0), 1.0);
  EXPECT_FALSE(std::isnan(sigmoid(-1000.0f)));
  for (double x : {-3.0, -0.2, 0.7, 4.0}) EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-15);
}

TEST(Affine, MatchesTripleLoop) {
  Rng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const auto n = 1 + rng.below(6), i = 1 + rng.below(7), o = 1 + rng.below(5);
    const auto x = random_mat(rng, n, i), w = random_mat(rng, i, o), b = random_mat(rng, 1, o);
    EXPECT_LE((affine(x, w, b) - oracle::affine(x, w, b)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Affine, ShapeMismatchThrows) {
  const Mat<double> x = Mat<double>::Zero(2, 3), w = Mat<double>::Zero(4, 2), b = Mat<double>::Zero(1, 2);
  EXPECT_THROW(affine(x, w, b), ShapeError);
}

TEST(Relu, ForwardAndBackward) {
  Mat<double> x(1, 4);
  x << -1.0, 0.0, 2.0, -0.5;
  const auto y = relu(x);
  Mat<double> expect(1, 4);
  expect << 0.0, 0.0, 2.0, 0.0;
  EXPECT_EQ(y, expect);
  const Mat<double> dy = Mat<double>::Ones(1, 4);
  Mat<double> dexpect(1, 4);
  dexpect << 0.0, 0.0, 1.0, 0.0;
  EXPECT_EQ(relu_backward(y, dy), dexpect);
}

TEST(Conv1d, MatchesSlidingWindowOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const int width = 1 + 2 * static_cast<int>(rng.below(5));
    const int dilation = 1 + static_cast<int>(rng.below(3));
    const auto n = 1 + rng.below(12), c_in = 1 + rng.below(4), c_out = 1 + rng.below(4);
    const auto x = random_mat(rng, n, c_in);
    const auto k = random_mat(rng, width * c_in, c_out);
    const auto b = random_mat(rng, 1, c_out);
    const auto got = conv1d(x, k, b, ConvGeometry{width, dilation});
    ASSERT_EQ(got.rows(), static_cast<Eigen::Index>(n));
    EXPECT_LE((got - oracle::conv1d(x, k, b, width, dilation)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv1d, HandComputedWidthThree) {
  // x = [1, 2, 3] on one channel, taps (1, 10, 100), bias 0.5
  Mat<double> x(3, 1), k(3, 1), b(1, 1);
  x << 1, 2, 3;
  k << 1, 10, 100;
  b << 0.5;
  const auto y = conv1d(x, k, b, ConvGeometry{3, 1});
  EXPECT_DOUBLE_EQ(y(0, 0), 0.5 + 10 * 1 + 100 * 2);
  EXPECT_DOUBLE_EQ(y(1, 0), 0.5 + 1 * 1 + 10 * 2 + 100 * 3);
  EXPECT_DOUBLE_EQ(y(2, 0), 0.5 + 1 * 2 + 10 * 3);
}

TEST(Gru, SingleStepMatchesScalarRecurrence) {
  // I = H = 1, so every gate is a scalar expression
  const double wz = 0.3, wr = -0.7, wc = 1.1, uz = 0.4, ur = 0.9, uc = -0.6, bz = 0.1, br = -0.2, bc = 0.05;
  Mat<double> win(1, 3), whid(1, 3), bias(1, 3), x(1, 1);
  win << wz, wr, wc;
  whid << uz, ur, uc;
  bias << bz, br, bc;
  x << 0.8;
  RowVec<double> h0(1);
  h0 << -0.35;
  const GruWeights<double> w{win, whid, bias};
  const auto out = gru_sequence(x, w, h0, false);
  const double h = -0.35, xv = 0.8;
  const double z = scalar_sigmoid(xv * wz + h * uz + bz);
  const double r = scalar_sigmoid(xv * wr + h * ur + br);
  const double c = std::tanh(xv * wc + (r * h) * uc + bc);
  EXPECT_NEAR(out(0, 0), (1 - z) * h + z * c, 1e-10);
}

TEST(Gru, TwoStepsForwardAndReverseByHand) {
  Rng rng(3);
  const auto win = random_mat(rng, 2, 6), whid = random_mat(rng, 2, 6), bias = random_mat(rng, 1, 6);
  const auto x = random_mat(rng, 3, 2);
  const GruWeights<double> w{win, whid, bias};
  auto step = [&](const RowVec<double>& h, const RowVec<double>& xt) {
    RowVec<double> out(2), r(2), z(2);
    for (int j = 0; j < 2; ++j) {
      double az = bias(0, j), ar = bias(0, 2 + j);
      for (int i = 0; i < 2; ++i) {
        az += xt(i) * win(i, j) + h(i) * whid(i, j);
        ar += xt(i) * win(i, 2 + j) + h(i) * whid(i, 2 + j);
      }
      z(j) = scalar_sigmoid(az);
      r(j) = scalar_sigmoid(ar);
    }
    for (int j = 0; j < 2; ++j) {
      double ac = bias(0, 4 + j);
      for (int i = 0; i < 2; ++i) ac += xt(i) * win(i, 4 + j) + r(i) * h(i) * whid(i, 4 + j);
      out(j) = (1 - z(j)) * h(j) + z(j) * std::tanh(ac);
    }
    return out;
  };
  const RowVec<double> h0 = RowVec<double>::Zero(2);
  const auto fwd = gru_sequence(x, w, h0, false);
  RowVec<double> h = h0;
  for (int t = 0; t < 3; ++t) {
    h = step(h, x.row(t));
    EXPECT_LE((fwd.row(t) - h).cwiseAbs().maxCoeff(), 1e-12);
  }
  const auto rev = gru_sequence(x, w, h0, true);
  h = h0;
  for (int t = 2; t >= 0; --t) {
    h = step(h, x.row(t));
    EXPECT_LE((rev.row(t) - h).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(JointSoftmax, HandExample) {
  Mat<double> s(2, 2);
  s << std::log(2.0), 0.0, 0.0, 0.0;
  const auto w = joint_softmax(s);
  EXPECT_NEAR(w(0, 0), 0.4, 1e-15);
  EXPECT_NEAR(w(0, 1), 0.2, 1e-15);
  EXPECT_NEAR(w(1, 0), 0.2, 1e-15);
  EXPECT_NEAR(w(1, 1), 0.2, 1e-15);
}

TEST(JointSoftmax, SumsToOneAndIsShiftInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_mat(rng, 1 + rng.below(9), 1 + rng.below(9), 30.0);
    const auto w = joint_softmax(s);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GT(w.minCoeff(), 0.0);
    const Mat<double> shifted = (s.array() + 123.0).matrix();
    EXPECT_LE((joint_softmax(shifted) - w).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(JointSoftmax, PaddingGetsExactlyZero) {
  Rng rng(5);
  const auto s = random_mat(rng, 4, 5);
  const auto w = joint_softmax(s, 2, 3);
  EXPECT_NEAR(w.block(0, 0, 2, 3).sum(), 1.0, 1e-12);
  EXPECT_EQ(w.block(2, 0, 2, 5).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(w.block(0, 3, 4, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_LE((w.block(0, 0, 2, 3) - joint_softmax(Mat<double>(s.block(0, 0, 2, 3)))).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(JointSoftmax, LargeScoresDoNotOverflow) {
  Mat<float> s(1, 2);
  s << 1000.0f, 999.0f;
  const auto w = joint_softmax(s);
  EXPECT_NEAR(w(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-6);
}

// Reverse passes against finite differences of a random linear readout.
namespace {

struct Readout {
  Mat<double> r;
  double operator()(const Mat<double>& y) const { return (y.array() * r.array()).sum(); }
};

}  // namespace

TEST(Backward, AffineConvGruSoftmaxAgainstFiniteDifferences) {
  Rng rng(6);
  auto x = random_mat(rng, 5, 3);
  auto w = random_mat(rng, 3, 4), b = random_mat(rng, 1, 4);
  auto k = random_mat(rng, 3 * 4, 2), kb = random_mat(rng, 1, 2);
  auto gin = random_mat(rng, 2, 6), ghid = random_mat(rng, 2, 6), gb = random_mat(rng, 1, 6);
  const Readout read{random_mat(rng, 5, 2)};
  const ConvGeometry geom{3, 2};

  auto loss = [&] {
    const auto a = affine(x, w, b);
    const auto c = conv1d(a, k, kb, geom);
    const RowVec<double> h0 = RowVec<double>::Zero(2);
    const auto g = gru_sequence(c, GruWeights<double>{gin, ghid, gb}, h0, true);
    const Mat<double> scores = g * g.transpose();
    const auto sm = joint_softmax(scores);
    return read(g) + 3.0 * (sm.array() * sm.array()).sum();
  };

  // analytic pass
  Mat<double> dw = Mat<double>::Zero(3, 4), db = Mat<double>::Zero(1, 4);
  Mat<double> dk = Mat<double>::Zero(12, 2), dkb = Mat<double>::Zero(1, 2);
  Mat<double> dgin = Mat<double>::Zero(2, 6), dghid = Mat<double>::Zero(2, 6), dgb = Mat<double>::Zero(1, 6);
  const auto a = affine(x, w, b);
  const auto c = conv1d(a, k, kb, geom);
  GruTrace<double> trace;
  const RowVec<double> h0 = RowVec<double>::Zero(2);
  const auto g = gru_sequence(c, GruWeights<double>{gin, ghid, gb}, h0, true, &trace);
  const Mat<double> scores = g * g.transpose();
  const auto sm = joint_softmax(scores);
  const Mat<double> dsm = 6.0 * sm;
  const Mat<double> dscores = joint_softmax_backward(sm, dsm);
  const Mat<double> dg = read.r + dscores * g + dscores.transpose() * g;
  Mat<double> dc, da, dx;
  gru_backward(c, GruWeights<double>{gin, ghid, gb}, trace, dg, &dc, GruGrads<double>{dgin, dghid, dgb});
  conv1d_backward(a, k, geom, dc, &da, dk, dkb);
  affine_backward(x, w, da, &dx, dw, db);

  std::vector<GradVariable> vars = {{"x", &x, dx},       {"w", &w, dw},       {"b", &b, db},
                                    {"k", &k, dk},       {"kb", &kb, dkb},    {"gin", &gin, dgin},
                                    {"ghid", &ghid, dghid}, {"gb", &gb, dgb}};
  const auto report = grad_check(vars, loss);
  EXPECT_LE(report.max_rel_error, 1e-7) << report.worst_variable << "[" << report.worst_index << "]";
  EXPECT_EQ(report.n_checked, static_cast<std::size_t>(15 + 12 + 4 + 24 + 2 + 12 + 12 + 6));
}

TEST(GradCheck, DetectsAWrongGradient) {
  Mat<double> v(1, 2);
  v << 0.3, -0.4;
  Mat<double> wrong(1, 2);
  wrong << 2 * 0.3, 0.0;  // second entry should be -0.8
  std::vector<GradVariable> vars = {{"v", &v, wrong}};
  const auto report = grad_check(vars, [&] { return v.squaredNorm(); });
  EXPECT_NEAR(report.max_rel_error, 0.8, 1e-6);
  EXPECT_EQ(report.worst_index, 1);
  EXPECT_EQ(v(0, 1), -0.4);  // restored after perturbation
}
