#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "lgmsplit/error.hpp"

namespace lgm {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Symmetric positive-definite matrix stored as its lower triangle in
/// compressed sparse column form. Row indices are strictly increasing within
/// a column and every diagonal entry is stored and positive.
class SparseSpdMatrix {
 public:
  SparseSpdMatrix() = default;

  /// Takes ownership of a lower-triangular matrix and validates it.
  static SparseSpdMatrix from_lower(SparseMatrix lower) {
    lower.makeCompressed();
    SparseSpdMatrix m;
    m.lower_ = std::move(lower);
    m.validate();
    return m;
  }

  /// Entries must lie in the lower triangle (row >= col); duplicates are summed.
  /// Explicit zeros are kept so that patterns built from the same structure agree.
  static SparseSpdMatrix from_triplets(int n, std::span<const Triplet> entries) {
    for (const auto& t : entries) {
      if (t.row() < t.col()) {
        throw DimensionMismatch("from_triplets: entry (" + std::to_string(t.row()) + "," +
                                std::to_string(t.col()) + ") is above the diagonal");
      }
    }
    SparseMatrix lower(n, n);
    lower.setFromTriplets(entries.begin(), entries.end());
    return from_lower(std::move(lower));
  }

  /// Lower triangle of a dense symmetric matrix; exact zeros off the diagonal are dropped.
  static SparseSpdMatrix from_dense(const DenseMatrix& dense) {
    if (dense.rows() != dense.cols()) throw DimensionMismatch("from_dense: matrix is not square");
    std::vector<Triplet> entries;
    for (int j = 0; j < dense.cols(); ++j) {
      for (int i = j; i < dense.rows(); ++i) {
        if (dense(i, j) != dense(j, i)) throw Error("from_dense: matrix is not symmetric");
        if (i == j || dense(i, j) != 0.0) entries.emplace_back(i, j, dense(i, j));
      }
    }
    return from_triplets(static_cast<int>(dense.rows()), entries);
  }

  static SparseSpdMatrix identity(int n, double scale = 1.0) {
    return diagonal(Vector::Constant(n, scale));
  }

  static SparseSpdMatrix diagonal(const Vector& d) {
    std::vector<Triplet> entries;
    entries.reserve(static_cast<std::size_t>(d.size()));
    for (int i = 0; i < d.size(); ++i) entries.emplace_back(i, i, d[i]);
    return from_triplets(static_cast<int>(d.size()), entries);
  }

  int size() const noexcept { return static_cast<int>(lower_.rows()); }
  int nnz() const noexcept { return static_cast<int>(lower_.nonZeros()); }

  std::span<const int> col_starts() const noexcept {
    return {lower_.outerIndexPtr(), static_cast<std::size_t>(size() + 1)};
  }
  std::span<const int> row_indices() const noexcept {
    return {lower_.innerIndexPtr(), static_cast<std::size_t>(nnz())};
  }
  std::span<const double> values() const noexcept {
    return {lower_.valuePtr(), static_cast<std::size_t>(nnz())};
  }

  const SparseMatrix& lower() const noexcept { return lower_; }

  /// Both triangles, for products with general sparse matrices.
  SparseMatrix full() const {
    SparseMatrix f = lower_.selfadjointView<Eigen::Lower>();
    f.makeCompressed();
    return f;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d = DenseMatrix::Zero(size(), size());
    for (int j = 0; j < size(); ++j) {
      for (int p = col_starts()[j]; p < col_starts()[j + 1]; ++p) {
        const int i = row_indices()[p];
        d(i, j) = values()[p];
        d(j, i) = values()[p];
      }
    }
    return d;
  }

  Vector multiply(const Vector& x) const {
    if (x.size() != size()) throw DimensionMismatch("multiply: vector length mismatch");
    Vector y = Vector::Zero(size());
    for (int j = 0; j < size(); ++j) {
      for (int p = col_starts()[j]; p < col_starts()[j + 1]; ++p) {
        const int i = row_indices()[p];
        const double v = values()[p];
        y[i] += v * x[j];
        if (i != j) y[j] += v * x[i];
      }
    }
    return y;
  }

  double quadratic_form(const Vector& x) const { return x.dot(multiply(x)); }

  SparseSpdMatrix scaled(double s) const {
    if (!(s > 0.0)) throw NonPositiveScale("scaled: factor must be positive");
    SparseSpdMatrix m = *this;
    m.lower_ *= s;
    return m;
  }

  bool same_pattern(const SparseSpdMatrix& other) const {
    if (size() != other.size() || nnz() != other.nnz()) return false;
    return std::equal(col_starts().begin(), col_starts().end(), other.col_starts().begin()) &&
           std::equal(row_indices().begin(), row_indices().end(), other.row_indices().begin());
  }

 private:
  void validate() const {
    if (lower_.rows() != lower_.cols()) throw DimensionMismatch("SparseSpdMatrix: not square");
    for (int j = 0; j < size(); ++j) {
      const int begin = col_starts()[j];
      const int end = col_starts()[j + 1];
      if (begin == end || row_indices()[begin] != j) {
        throw Error("SparseSpdMatrix: diagonal entry " + std::to_string(j) + " is not stored");
      }
      if (!(values()[begin] > 0.0)) {
        throw NotPositiveDefinite(j, j, values()[begin]);
      }
      for (int p = begin + 1; p < end; ++p) {
        if (row_indices()[p] <= row_indices()[p - 1]) {
          throw Error("SparseSpdMatrix: row indices not strictly increasing in column " +
                      std::to_string(j));
        }
      }
    }
  }

  SparseMatrix lower_;
};

/// Lower triangle of a general symmetric sparse matrix.
inline SparseSpdMatrix spd_from_symmetric(const SparseMatrix& symmetric) {
  SparseMatrix lower = symmetric.triangularView<Eigen::Lower>();
  return SparseSpdMatrix::from_lower(std::move(lower));
}

inline SparseSpdMatrix block_diag(std::span<const SparseSpdMatrix> blocks) {
  if (blocks.empty()) throw BadDimension("block_diag: no blocks");
  int n = 0;
  std::size_t nnz = 0;
  for (const auto& b : blocks) {
    n += b.size();
    nnz += static_cast<std::size_t>(b.nnz());
  }
  std::vector<Triplet> entries;
  entries.reserve(nnz);
  int offset = 0;
  for (const auto& b : blocks) {
    for (int j = 0; j < b.size(); ++j) {
      for (int p = b.col_starts()[j]; p < b.col_starts()[j + 1]; ++p) {
        entries.emplace_back(offset + b.row_indices()[p], offset + j, b.values()[p]);
      }
    }
    offset += b.size();
  }
  return SparseSpdMatrix::from_triplets(n, entries);
}

inline SparseSpdMatrix block_diag(std::initializer_list<SparseSpdMatrix> blocks) {
  return block_diag(std::span<const SparseSpdMatrix>(blocks.begin(), blocks.size()));
}

/// diag(scales) (x) B.
inline SparseSpdMatrix kron_diag(const Vector& scales, const SparseSpdMatrix& b) {
  if (scales.size() == 0) throw BadDimension("kron_diag: empty scale vector");
  std::vector<SparseSpdMatrix> blocks;
  blocks.reserve(static_cast<std::size_t>(scales.size()));
  for (Eigen::Index k = 0; k < scales.size(); ++k) {
    if (!(scales[k] > 0.0)) {
      throw NonPositiveScale("kron_diag: scale " + std::to_string(k) + " is not positive");
    }
    blocks.push_back(b.scaled(scales[k]));
  }
  return block_diag(blocks);
}

}  // namespace lgm
