#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lgmsplit/error.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

// Partition blocks are 2- or 3-dimensional; a fixed upper bound keeps them on the stack.
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 4, 1>;
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 4, 4>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Split of eta into disjoint index sets, one per partition. The sets need not
/// be contiguous: the Gaussian scenario pairs eta[i] with eta[I + i].
class PartitionLayout {
 public:
  PartitionLayout() = default;

  PartitionLayout(int n_eta, std::vector<std::vector<int>> parts)
      : n_eta_(n_eta), parts_(std::move(parts)) {
    std::vector<int> owner(static_cast<std::size_t>(n_eta), -1);
    for (std::size_t p = 0; p < parts_.size(); ++p) {
      if (parts_[p].empty() || parts_[p].size() > 4) {
        throw BadDimension("partition " + std::to_string(p) + " must hold 1 to 4 indices");
      }
      for (int idx : parts_[p]) {
        if (idx < 0 || idx >= n_eta) throw BadDimension("partition index out of range");
        if (owner[static_cast<std::size_t>(idx)] != -1) {
          throw BadDimension("eta index " + std::to_string(idx) + " is in two partitions");
        }
        owner[static_cast<std::size_t>(idx)] = static_cast<int>(p);
      }
    }
    for (int i = 0; i < n_eta; ++i) {
      if (owner[static_cast<std::size_t>(i)] == -1) {
        throw BadDimension("eta index " + std::to_string(i) + " belongs to no partition");
      }
    }
  }

  /// Partition i = {i, n + i, 2n + i, ...} for `width` interleaved blocks of length n.
  static PartitionLayout interleaved(int n, int width) {
    std::vector<std::vector<int>> parts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int w = 0; w < width; ++w) parts[static_cast<std::size_t>(i)].push_back(w * n + i);
    }
    return PartitionLayout(n * width, std::move(parts));
  }

  int n_eta() const noexcept { return n_eta_; }
  int count() const noexcept { return static_cast<int>(parts_.size()); }
  const std::vector<int>& indices(int i) const { return parts_[static_cast<std::size_t>(i)]; }

  SmallVector gather(const Vector& eta, int i) const {
    const auto& idx = indices(i);
    SmallVector x(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) x[static_cast<Eigen::Index>(k)] = eta[idx[k]];
    return x;
  }

  void scatter(const SmallVector& x, int i, Vector& eta) const {
    const auto& idx = indices(i);
    for (std::size_t k = 0; k < idx.size(); ++k) eta[idx[k]] = x[static_cast<Eigen::Index>(k)];
  }

 private:
  int n_eta_ = 0;
  std::vector<std::vector<int>> parts_;
};

/// f(eta) = sum_i f_i(eta_i). log_lik returns -inf outside the support.
template <class L>
concept PartitionedLikelihood = requires(const L& lik, int i, const SmallVector& x) {
  { lik.layout() } -> std::convertible_to<const PartitionLayout&>;
  { lik.log_lik(i, x) } -> std::convertible_to<double>;
  { lik.gradient(i, x) } -> std::convertible_to<SmallVector>;
  { lik.hessian(i, x) } -> std::convertible_to<SmallMatrix>;
};

template <PartitionedLikelihood L>
double total_log_lik(const L& lik, const Vector& eta) {
  const PartitionLayout& layout = lik.layout();
  if (eta.size() != layout.n_eta()) throw DimensionMismatch("total_log_lik: eta length");
  double sum = 0.0;
  for (int i = 0; i < layout.count(); ++i) sum += lik.log_lik(i, layout.gather(eta, i));
  return sum;
}

/// Symmetrized central differences of an analytic gradient. Falls back to a
/// one-sided difference when one neighbour leaves the support.
template <class GradientFn>
SmallMatrix hessian_from_gradient(const SmallVector& x, GradientFn&& grad) {
  const Eigen::Index d = x.size();
  SmallMatrix h(d, d);
  const SmallVector g0 = grad(x);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(x[j]));
    SmallVector xp = x;
    SmallVector xm = x;
    xp[j] += step;
    xm[j] -= step;
    const SmallVector gp = grad(xp);
    const SmallVector gm = grad(xm);
    const bool okp = gp.allFinite();
    const bool okm = gm.allFinite();
    if (okp && okm) {
      h.col(j) = (gp - gm) / (2.0 * step);
    } else if (okp) {
      h.col(j) = (gp - g0) / step;
    } else if (okm) {
      h.col(j) = (g0 - gm) / step;
    } else {
      h.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace lgm
