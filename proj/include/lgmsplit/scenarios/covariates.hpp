#pragma once

#include <cmath>
#include <numbers>

#include "lgmsplit/random.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

/// Centres each column and scales it to unit sample standard deviation.
/// Constant columns are centred only.
inline void standardize_columns(DenseMatrix& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    if (x.rows() > 1) {
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(x.rows() - 1));
      if (sd > 0.0) col /= sd;
    }
    // second pass removes the rounding left by the first
    col.array() -= col.mean();
  }
}

/// Design matrix [1 | standardized log of log-uniform(1, 1000) draws].
inline DenseMatrix standardized_covariates(int rows, int p, Rng& rng) {
  DenseMatrix raw(rows, p);
  const double lo = 0.0;
  const double hi = std::log(1000.0);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < rows; ++i) raw(i, j) = lo + (hi - lo) * uniform01(rng);
  }
  standardize_columns(raw);
  DenseMatrix x(rows, p + 1);
  x.col(0).setOnes();
  x.rightCols(p) = raw;
  return x;
}

/// River-by-month covariates: a log-uniform level per river and covariate,
/// modulated by a seasonal cycle with a covariate-specific phase, then logged
/// and standardized. Row 12 j + m is river j, month m. No intercept column.
inline DenseMatrix river_month_covariates(int rivers, int p, Rng& rng) {
  DenseMatrix x(12 * rivers, p);
  for (int k = 0; k < p; ++k) {
    const double phase = 12.0 * uniform01(rng);
    for (int j = 0; j < rivers; ++j) {
      const double level = std::log(1000.0) * uniform01(rng);
      for (int m = 0; m < 12; ++m) {
        x(12 * j + m, k) = level + 0.5 * std::sin(2.0 * std::numbers::pi * (m + phase) / 12.0);
      }
    }
  }
  standardize_columns(x);
  return x;
}

}  // namespace lgm
