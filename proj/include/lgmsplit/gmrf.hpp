#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lgmsplit/cholesky.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

/// Circulant pentadiagonal precision with band
/// [1, -2(k^2+2), k^4+4k^2+6, -2(k^2+2), 1] on every row, wrapped around.
inline SparseSpdMatrix circular_band_precision(double kappa, int n) {
  if (n < 5) throw BadDimension("circular_band_precision: n must be at least 5");
  if (!(kappa > 0.0)) throw NonPositiveScale("circular_band_precision: kappa must be positive");
  const double k2 = kappa * kappa;
  const double diag = k2 * k2 + 4.0 * k2 + 6.0;
  const double off1 = -2.0 * (k2 + 2.0);
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(3 * n));
  for (int i = 0; i < n; ++i) {
    entries.emplace_back(i, i, diag);
    for (int d = 1; d <= 2; ++d) {
      const int j = (i + d) % n;
      const double v = d == 1 ? off1 : 1.0;
      entries.emplace_back(std::max(i, j), std::min(i, j), v);
    }
  }
  return SparseSpdMatrix::from_triplets(n, entries);
}

/// Graph Laplacian (degree minus adjacency) of the rows x cols 4-neighbour lattice.
/// Node (r, c) has index r * cols + c.
inline SparseMatrix lattice_laplacian(int rows, int cols) {
  if (rows < 1 || cols < 1) throw BadDimension("lattice_laplacian: empty lattice");
  const int n = rows * cols;
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(5 * n));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      int degree = 0;
      auto link = [&](int rr, int cc) {
        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return;
        entries.emplace_back(i, rr * cols + cc, -1.0);
        ++degree;
      };
      link(r - 1, c);
      link(r + 1, c);
      link(r, c - 1);
      link(r, c + 1);
      entries.emplace_back(i, i, static_cast<double>(degree));
    }
  }
  SparseMatrix g(n, n);
  g.setFromTriplets(entries.begin(), entries.end());
  return g;
}

/// Precomputed pieces of (k^2 I + G)^2 = k^4 I + 2 k^2 G + G^2 on a shared
/// pattern, so precisions for new kappa values are a linear combination of
/// three value arrays.
class MaternLatticeBasis {
 public:
  MaternLatticeBasis(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows < 1 || cols < 1 || rows * cols < 4) {
      throw BadDimension("lattice_matern_precision: lattice needs at least 4 nodes");
    }
    const SparseMatrix g = lattice_laplacian(rows, cols);
    const SparseMatrix g2 = (g * g).pruned();
    const SparseMatrix lower = g2.triangularView<Eigen::Lower>();
    pattern_ = lower;
    pattern_.makeCompressed();
    const int nnz = static_cast<int>(pattern_.nonZeros());
    identity_.assign(static_cast<std::size_t>(nnz), 0.0);
    laplacian_.assign(static_cast<std::size_t>(nnz), 0.0);
    squared_.assign(pattern_.valuePtr(), pattern_.valuePtr() + nnz);
    for (int j = 0; j < pattern_.cols(); ++j) {
      for (int p = pattern_.outerIndexPtr()[j]; p < pattern_.outerIndexPtr()[j + 1]; ++p) {
        const int i = pattern_.innerIndexPtr()[p];
        laplacian_[static_cast<std::size_t>(p)] = g.coeff(i, j);
        if (i == j) identity_[static_cast<std::size_t>(p)] = 1.0;
      }
    }
  }

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int size() const noexcept { return rows_ * cols_; }

  /// scale * (kappa^2 I + G)^T (kappa^2 I + G)
  SparseSpdMatrix precision(double kappa, double scale = 1.0) const {
    if (!(kappa > 0.0)) throw NonPositiveScale("lattice_matern_precision: kappa must be positive");
    if (!(scale > 0.0)) throw NonPositiveScale("lattice_matern_precision: scale must be positive");
    const double k2 = kappa * kappa;
    SparseMatrix m = pattern_;
    double* v = m.valuePtr();
    for (std::size_t p = 0; p < squared_.size(); ++p) {
      v[p] = scale * (k2 * k2 * identity_[p] + 2.0 * k2 * laplacian_[p] + squared_[p]);
    }
    return SparseSpdMatrix::from_lower(std::move(m));
  }

 private:
  int rows_;
  int cols_;
  SparseMatrix pattern_;
  std::vector<double> identity_;
  std::vector<double> laplacian_;
  std::vector<double> squared_;
};

/// (k^2 I + G)^T (k^2 I + G) on a rows x cols lattice, G the 5-point Laplacian
/// and identity mass lumping.
inline SparseSpdMatrix lattice_matern_precision(int rows, int cols, double kappa) {
  return MaternLatticeBasis(rows, cols).precision(kappa);
}

using ThetaVectorFn = std::function<Vector(const Vector&)>;
using ThetaPrecisionFn = std::function<SparseSpdMatrix(const Vector&)>;

/// eta = Z nu + eps with eps ~ N(0, Q_eps(theta)^{-1}), Q_eps diagonal, and
/// nu ~ N(mu_nu, Q_nu(theta)^{-1}). Builders must be pure functions of theta.
class LatentStructure {
 public:
  LatentStructure() = default;

  LatentStructure(SparseMatrix z, ThetaVectorFn q_eps_diagonal, ThetaPrecisionFn q_nu,
                  Vector mu_nu)
      : z_(std::move(z)),
        q_eps_(std::move(q_eps_diagonal)),
        q_nu_(std::move(q_nu)),
        mu_nu_(std::move(mu_nu)) {
    z_.makeCompressed();
    zt_ = z_.transpose();
    zt_.makeCompressed();
    if (mu_nu_.size() != z_.cols()) {
      throw DimensionMismatch("LatentStructure: mu_nu length differs from columns of Z");
    }
  }

  int n_eta() const noexcept { return static_cast<int>(z_.rows()); }
  int n_nu() const noexcept { return static_cast<int>(z_.cols()); }
  const SparseMatrix& z() const noexcept { return z_; }
  const SparseMatrix& z_transpose() const noexcept { return zt_; }
  const Vector& mu_nu() const noexcept { return mu_nu_; }

  /// Diagonal of Q_eps(theta).
  Vector q_eps(const Vector& theta) const {
    Vector d = q_eps_(theta);
    if (d.size() != n_eta()) throw DimensionMismatch("q_eps builder returned wrong length");
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (!(d[i] > 0.0)) throw NonPositiveScale("Q_eps entry " + std::to_string(i) + " not positive");
    }
    return d;
  }

  SparseSpdMatrix q_nu(const Vector& theta) const {
    SparseSpdMatrix q = q_nu_(theta);
    if (q.size() != n_nu()) throw DimensionMismatch("q_nu builder returned wrong dimension");
    return q;
  }

  /// Q_nu + Z^T Q_eps Z.
  SparseSpdMatrix conditional_precision(const SparseSpdMatrix& q_nu, const Vector& q_eps) const {
    const SparseMatrix ztqz = zt_ * q_eps.asDiagonal() * z_;
    SparseMatrix sum = q_nu.lower() + SparseMatrix(ztqz.triangularView<Eigen::Lower>());
    return SparseSpdMatrix::from_lower(std::move(sum));
  }

  /// Q_nu mu_nu + Z^T Q_eps eta.
  Vector conditional_rhs(const SparseSpdMatrix& q_nu, const Vector& q_eps,
                         const Vector& eta) const {
    if (eta.size() != n_eta()) throw DimensionMismatch("eta length mismatch");
    Vector rhs = zt_ * q_eps.cwiseProduct(eta);
    if (mu_nu_.size() > 0 && !mu_nu_.isZero(0.0)) rhs += q_nu.multiply(mu_nu_);
    return rhs;
  }

 private:
  SparseMatrix z_;
  SparseMatrix zt_;
  ThetaVectorFn q_eps_;
  ThetaPrecisionFn q_nu_;
  Vector mu_nu_;
};

struct ConditionalGaussian {
  Vector mean;
  SparseSpdMatrix precision_matrix;
  CholeskyFactor precision;
};

/// Full conditional of nu given eta:
/// N(Q^{-1}(Q_nu mu_nu + Z^T Q_eps eta), Q^{-1}) with Q = Q_nu + Z^T Q_eps Z.
inline ConditionalGaussian conditional_nu_given_eta(const LatentStructure& s, const Vector& theta,
                                                    const Vector& eta) {
  if (eta.size() != s.n_eta()) throw DimensionMismatch("conditional_nu_given_eta: eta length");
  const SparseSpdMatrix q_nu = s.q_nu(theta);
  const Vector q_eps = s.q_eps(theta);
  SparseSpdMatrix q = s.conditional_precision(q_nu, q_eps);
  CholeskyFactor factor = cholesky(q);
  Vector mean = factor.solve(s.conditional_rhs(q_nu, q_eps, eta));
  return {std::move(mean), std::move(q), std::move(factor)};
}

struct DenseGaussian {
  Vector mean;
  DenseMatrix precision;
};

/// Dense joint prior of (eta, nu). Meant for verification on small models.
inline DenseGaussian joint_prior_dense(const LatentStructure& s, const Vector& theta,
                                       int dense_limit = 500) {
  const int ne = s.n_eta();
  const int nn = s.n_nu();
  if (ne + nn > dense_limit) {
    throw TooLargeForDense("joint_prior_dense: dimension " + std::to_string(ne + nn) +
                           " exceeds limit " + std::to_string(dense_limit));
  }
  const DenseMatrix z = DenseMatrix(s.z());
  const Vector q_eps = s.q_eps(theta);
  const DenseMatrix q_nu = s.q_nu(theta).to_dense();
  DenseGaussian g;
  g.mean.resize(ne + nn);
  g.mean << z * s.mu_nu(), s.mu_nu();
  g.precision.resize(ne + nn, ne + nn);
  const DenseMatrix qz = q_eps.asDiagonal() * z;
  g.precision.topLeftCorner(ne, ne) = q_eps.asDiagonal();
  g.precision.topRightCorner(ne, nn) = -qz;
  g.precision.bottomLeftCorner(nn, ne) = -qz.transpose();
  g.precision.bottomRightCorner(nn, nn) = q_nu + z.transpose() * qz;
  return g;
}

}  // namespace lgm
