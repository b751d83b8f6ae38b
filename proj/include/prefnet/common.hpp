// SPDX-License-Identifier: Apache-2.0
/**
 * @file   common.hpp
 * @brief  Shared matrix aliases, error types and seeded random numbers.
 */
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace prefnet {

/// Dense row-major matrix; every tensor in the toolkit is at most 2-D.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row vector (1 x n), the shape of biases and pooled representations.
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Base class of every error the toolkit throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing input data: files, formats, schemas.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training or a failed gradient check.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Derive an independent sub-seed from a master seed and a purpose tag, so
/// adding a consumer never perturbs another consumer's stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/**
 * Seeded generator with portable conversions. std::uniform_real_distribution
 * is implementation-defined, which would make checkpoints differ between
 * standard libraries; the conversions here are fixed.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  bool coin() { return (engine_() >> 63) != 0; }

  template <typename Container>
  void shuffle(Container& c) {
    for (std::size_t i = c.size(); i > 1; --i) {
      std::swap(c[i - 1], c[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace prefnet
