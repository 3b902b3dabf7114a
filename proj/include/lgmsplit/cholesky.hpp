#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/OrderingMethods>

#include "lgmsplit/random.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

enum class Ordering { Natural, Amd };

/// Pattern-only part of a sparse Cholesky factorization: the fill-reducing
/// permutation, elimination tree and column layout of L. Depends only on the
/// sparsity pattern of Q, so one analysis serves every matrix sharing it.
struct SymbolicCholesky {
  int n = 0;
  Ordering ordering = Ordering::Amd;
  std::vector<int> perm;      // perm[new] = old
  std::vector<int> inv_perm;  // inv_perm[old] = new
  std::vector<int> parent;    // elimination tree of P Q P^T
  std::vector<int> l_col_starts;
  // Upper triangle of P Q P^T in CSC form, and where each stored entry of Q lands in it.
  std::vector<int> c_col_starts;
  std::vector<int> c_row_indices;
  std::vector<int> q_to_c;
  // Pattern of the analysed matrix, for reuse checks.
  std::vector<int> q_col_starts;
  std::vector<int> q_row_indices;

  bool matches(const SparseSpdMatrix& q) const {
    return q.size() == n && q.nnz() == static_cast<int>(q_row_indices.size()) &&
           std::equal(q_col_starts.begin(), q_col_starts.end(), q.col_starts().begin()) &&
           std::equal(q_row_indices.begin(), q_row_indices.end(), q.row_indices().begin());
  }

  int nnz_l() const noexcept { return l_col_starts.empty() ? 0 : l_col_starts.back(); }
};

namespace detail {

// Nonzero pattern of row k of L, returned in stack[top..n) in topological order.
inline int ereach(const SymbolicCholesky& s, int k, std::vector<int>& stack,
                  std::vector<int>& mark) {
  int top = s.n;
  mark[k] = k;
  for (int p = s.c_col_starts[k]; p < s.c_col_starts[k + 1]; ++p) {
    int i = s.c_row_indices[p];
    if (i > k) continue;
    int len = 0;
    for (; mark[i] != k; i = s.parent[i]) {
      stack[len++] = i;
      mark[i] = k;
    }
    while (len > 0) stack[--top] = stack[--len];
  }
  return top;
}

inline std::vector<int> fill_reducing_order(const SparseSpdMatrix& q, Ordering ordering) {
  std::vector<int> perm(static_cast<std::size_t>(q.size()));
  if (ordering == Ordering::Natural) {
    std::iota(perm.begin(), perm.end(), 0);
    return perm;
  }
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
  Eigen::AMDOrdering<int> amd;
  const SparseMatrix full = q.full();
  amd(full, p);
  for (int k = 0; k < q.size(); ++k) perm[static_cast<std::size_t>(k)] = p.indices()[k];
  return perm;
}

}  // namespace detail

inline std::shared_ptr<const SymbolicCholesky> analyze(const SparseSpdMatrix& q,
                                                       Ordering ordering = Ordering::Amd) {
  auto s = std::make_shared<SymbolicCholesky>();
  const int n = q.size();
  s->n = n;
  s->ordering = ordering;
  s->perm = detail::fill_reducing_order(q, ordering);
  s->inv_perm.assign(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < n; ++k) s->inv_perm[static_cast<std::size_t>(s->perm[k])] = k;
  s->q_col_starts.assign(q.col_starts().begin(), q.col_starts().end());
  s->q_row_indices.assign(q.row_indices().begin(), q.row_indices().end());

  // Upper triangle of C = P Q P^T: entry (i, j) of Q with i >= j goes to
  // column max(pinv[i], pinv[j]), row min(...).
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < n; ++j) {
    for (int p = q.col_starts()[j]; p < q.col_starts()[j + 1]; ++p) {
      const int i = q.row_indices()[p];
      ++counts[static_cast<std::size_t>(std::max(s->inv_perm[i], s->inv_perm[j]))];
    }
  }
  s->c_col_starts.assign(static_cast<std::size_t>(n + 1), 0);
  for (int k = 0; k < n; ++k) s->c_col_starts[k + 1] = s->c_col_starts[k] + counts[k];
  std::vector<int> next(s->c_col_starts.begin(), s->c_col_starts.end() - 1);
  s->c_row_indices.assign(static_cast<std::size_t>(q.nnz()), 0);
  s->q_to_c.assign(static_cast<std::size_t>(q.nnz()), 0);
  for (int j = 0; j < n; ++j) {
    for (int p = q.col_starts()[j]; p < q.col_starts()[j + 1]; ++p) {
      const int a = s->inv_perm[q.row_indices()[p]];
      const int b = s->inv_perm[j];
      const int col = std::max(a, b);
      const int dst = next[static_cast<std::size_t>(col)]++;
      s->c_row_indices[static_cast<std::size_t>(dst)] = std::min(a, b);
      s->q_to_c[static_cast<std::size_t>(p)] = dst;
    }
  }

  // Elimination tree with path compression.
  s->parent.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> ancestor(static_cast<std::size_t>(n), -1);
  for (int k = 0; k < n; ++k) {
    for (int p = s->c_col_starts[k]; p < s->c_col_starts[k + 1]; ++p) {
      int i = s->c_row_indices[p];
      while (i != -1 && i < k) {
        const int inext = ancestor[i];
        ancestor[i] = k;
        if (inext == -1) s->parent[i] = k;
        i = inext;
      }
    }
  }

  // Column counts of L from the row patterns.
  std::vector<int> col_counts(static_cast<std::size_t>(n), 1);
  std::vector<int> stack(static_cast<std::size_t>(n));
  std::vector<int> mark(static_cast<std::size_t>(n), -1);
  for (int k = 0; k < n; ++k) {
    const int top = detail::ereach(*s, k, stack, mark);
    for (int t = top; t < n; ++t) ++col_counts[static_cast<std::size_t>(stack[t])];
  }
  s->l_col_starts.assign(static_cast<std::size_t>(n + 1), 0);
  for (int k = 0; k < n; ++k) s->l_col_starts[k + 1] = s->l_col_starts[k] + col_counts[k];
  return s;
}

struct FactorizationFailure {
  int pivot = -1;
  int original_index = -1;
  double value = 0.0;
};

/// P Q P^T = L L^T with L sparse lower triangular. Immutable once built.
class CholeskyFactor {
 public:
  int size() const noexcept { return symbolic_->n; }
  double log_det() const noexcept { return log_det_; }
  const SymbolicCholesky& symbolic() const noexcept { return *symbolic_; }
  std::shared_ptr<const SymbolicCholesky> symbolic_ptr() const noexcept { return symbolic_; }
  std::span<const int> permutation() const noexcept { return symbolic_->perm; }
  int nnz_l() const noexcept { return static_cast<int>(values_.size()); }

  SparseMatrix factor_l() const {
    std::vector<Triplet> entries;
    entries.reserve(values_.size());
    for (int j = 0; j < size(); ++j) {
      for (int p = col_starts()[j]; p < col_starts()[j + 1]; ++p) {
        entries.emplace_back(rows_[static_cast<std::size_t>(p)], j,
                             values_[static_cast<std::size_t>(p)]);
      }
    }
    SparseMatrix l(size(), size());
    l.setFromTriplets(entries.begin(), entries.end());
    return l;
  }

  /// Solves Q x = rhs.
  Vector solve(const Vector& rhs) const {
    if (rhs.size() != size()) throw DimensionMismatch("solve: rhs length mismatch");
    Vector y(size());
    for (int k = 0; k < size(); ++k) y[k] = rhs[symbolic_->perm[k]];
    lower_solve(y);
    upper_solve(y);
    Vector x(size());
    for (int k = 0; k < size(); ++k) x[symbolic_->perm[k]] = y[k];
    return x;
  }

  /// x = P^T L^{-T} z: maps standard normal z to N(0, Q^{-1}).
  Vector whiten_inverse(const Vector& z) const {
    if (z.size() != size()) throw DimensionMismatch("whiten_inverse: length mismatch");
    Vector y = z;
    upper_solve(y);
    Vector x(size());
    for (int k = 0; k < size(); ++k) x[symbolic_->perm[k]] = y[k];
    return x;
  }

  static std::optional<CholeskyFactor> try_factorize(
      const SparseSpdMatrix& q, std::shared_ptr<const SymbolicCholesky> symbolic,
      FactorizationFailure* failure = nullptr) {
    if (!symbolic->matches(q)) throw DimensionMismatch("factorize: pattern differs from analysis");
    const SymbolicCholesky& s = *symbolic;
    const int n = s.n;
    std::vector<double> cx(s.c_row_indices.size());
    for (std::size_t p = 0; p < s.q_to_c.size(); ++p) cx[static_cast<std::size_t>(s.q_to_c[p])] = q.values()[p];

    CholeskyFactor f;
    f.symbolic_ = std::move(symbolic);
    f.rows_.assign(static_cast<std::size_t>(s.nnz_l()), 0);
    f.values_.assign(static_cast<std::size_t>(s.nnz_l()), 0.0);
    std::vector<int> next(s.l_col_starts.begin(), s.l_col_starts.end() - 1);
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    std::vector<int> stack(static_cast<std::size_t>(n));
    std::vector<int> mark(static_cast<std::size_t>(n), -1);
    double log_det = 0.0;

    for (int k = 0; k < n; ++k) {
      const int top = detail::ereach(s, k, stack, mark);
      x[k] = 0.0;
      for (int p = s.c_col_starts[k]; p < s.c_col_starts[k + 1]; ++p) {
        const int i = s.c_row_indices[p];
        if (i <= k) x[i] += cx[p];
      }
      double d = x[k];
      x[k] = 0.0;
      for (int t = top; t < n; ++t) {
        const int i = stack[t];
        const double lki = x[i] / f.values_[s.l_col_starts[i]];
        x[i] = 0.0;
        for (int p = s.l_col_starts[i] + 1; p < next[i]; ++p) {
          x[f.rows_[p]] -= f.values_[p] * lki;
        }
        d -= lki * lki;
        const int p = next[i]++;
        f.rows_[p] = k;
        f.values_[p] = lki;
      }
      if (!(d > 1e-300)) {
        if (failure) *failure = {k, s.perm[k], d};
        return std::nullopt;
      }
      const double lkk = std::sqrt(d);
      const int p = next[k]++;
      f.rows_[p] = k;
      f.values_[p] = lkk;
      log_det += 2.0 * std::log(lkk);
    }
    f.log_det_ = log_det;
    return f;
  }

 private:
  CholeskyFactor() = default;

  std::span<const int> col_starts() const noexcept { return symbolic_->l_col_starts; }

  // Overwrites y with L^{-1} y.
  void lower_solve(Vector& y) const {
    for (int j = 0; j < size(); ++j) {
      const int begin = col_starts()[j];
      y[j] /= values_[begin];
      for (int p = begin + 1; p < col_starts()[j + 1]; ++p) y[rows_[p]] -= values_[p] * y[j];
    }
  }

  // Overwrites y with L^{-T} y.
  void upper_solve(Vector& y) const {
    for (int j = size() - 1; j >= 0; --j) {
      const int begin = col_starts()[j];
      for (int p = begin + 1; p < col_starts()[j + 1]; ++p) y[j] -= values_[p] * y[rows_[p]];
      y[j] /= values_[begin];
    }
  }

  std::shared_ptr<const SymbolicCholesky> symbolic_;
  std::vector<int> rows_;
  std::vector<double> values_;
  double log_det_ = 0.0;
};

/// Factorizes Q; throws NotPositiveDefinite with the failing pivot.
inline CholeskyFactor cholesky(const SparseSpdMatrix& q, Ordering ordering = Ordering::Amd) {
  FactorizationFailure failure;
  auto f = CholeskyFactor::try_factorize(q, analyze(q, ordering), &failure);
  if (!f) throw NotPositiveDefinite(failure.pivot, failure.original_index, failure.value);
  return *std::move(f);
}

/// Reuses the symbolic analysis across matrices that share a pattern.
class CholeskyCache {
 public:
  explicit CholeskyCache(Ordering ordering = Ordering::Amd) : ordering_(ordering) {}

  std::optional<CholeskyFactor> try_factorize(const SparseSpdMatrix& q,
                                              FactorizationFailure* failure = nullptr) {
    if (!symbolic_ || !symbolic_->matches(q)) symbolic_ = analyze(q, ordering_);
    return CholeskyFactor::try_factorize(q, symbolic_, failure);
  }

  CholeskyFactor factorize(const SparseSpdMatrix& q) {
    FactorizationFailure failure;
    auto f = try_factorize(q, &failure);
    if (!f) throw NotPositiveDefinite(failure.pivot, failure.original_index, failure.value);
    return *std::move(f);
  }

 private:
  Ordering ordering_;
  std::shared_ptr<const SymbolicCholesky> symbolic_;
};

inline Vector solve(const CholeskyFactor& factor, const Vector& rhs) { return factor.solve(rhs); }

inline double log_det(const CholeskyFactor& factor) { return factor.log_det(); }

/// Exact draw from N(mean, Q^{-1}) given the factor of Q.
inline Vector sample_gmrf(const CholeskyFactor& factor, const Vector& mean, Rng& rng) {
  if (mean.size() != factor.size()) throw DimensionMismatch("sample_gmrf: mean length mismatch");
  return mean + factor.whiten_inverse(standard_normal_vector(rng, factor.size()));
}

}  // namespace lgm
