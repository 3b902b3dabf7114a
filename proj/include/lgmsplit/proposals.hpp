#pragma once

#include <cmath>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "lgmsplit/error.hpp"
#include "lgmsplit/random.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

/// theta*_i = f_i theta_i with f_i drawn from pi(f) ∝ 1 + 1/f on [1/F, F].
struct MultiplicativeProposal {
  double F = 2.0;

  explicit MultiplicativeProposal(double f = 2.0) : F(f) {
    if (!(F > 1.0)) throw ConfigError("multiplicative proposal needs F > 1");
  }

  double normalizer() const { return F - 1.0 / F + 2.0 * std::log(F); }

  double density(double f) const {
    if (f < 1.0 / F || f > F) return 0.0;
    return (1.0 + 1.0 / f) / normalizer();
  }

  double cdf(double f) const {
    if (f <= 1.0 / F) return 0.0;
    if (f >= F) return 1.0;
    return (f - 1.0 / F + std::log(f) + std::log(F)) / normalizer();
  }

  /// Inverse cdf: solves f + log f = u Z + 1/F - log F by safeguarded Newton.
  double quantile(double u) const {
    const double target = u * normalizer() + 1.0 / F - std::log(F);
    double lo = 1.0 / F;
    double hi = F;
    double f = 1.0 / F + u * (F - 1.0 / F);
    for (int it = 0; it < 100; ++it) {
      const double h = f + std::log(f) - target;
      if (h > 0.0) hi = f; else lo = f;
      double next = f - h / (1.0 + 1.0 / f);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - f) <= 1e-12 * f) return next;
      f = next;
    }
    return f;
  }

  double draw_factor(Rng& rng) const { return quantile(uniform01(rng)); }
};

/// theta* = theta + N(0, (-c H)^{-1}) with H a fixed negative definite Hessian.
class GaussianRandomWalk {
 public:
  GaussianRandomWalk(const DenseMatrix& hessian, double c) : c_(c) {
    if (hessian.rows() != hessian.cols()) throw DimensionMismatch("random walk: Hessian not square");
    if (!(c > 0.0)) throw ConfigError("random walk: scale c must be positive");
    precision_ = -c * 0.5 * (hessian + hessian.transpose());
    llt_.compute(precision_);
    if (llt_.info() != Eigen::Success) {
      throw HessianNotNegativeDefinite("random walk: -c H is not positive definite");
    }
  }

  double c() const noexcept { return c_; }
  const DenseMatrix& precision() const noexcept { return precision_; }

  Vector increment(Rng& rng) const {
    const Vector z = standard_normal_vector(rng, precision_.rows());
    return llt_.matrixU().solve(z);
  }

 private:
  double c_;
  DenseMatrix precision_;
  Eigen::LLT<DenseMatrix> llt_;
};

using HyperProposal = std::variant<MultiplicativeProposal, GaussianRandomWalk>;

struct ThetaProposal {
  Vector theta;
  double log_q_correction = 0.0;  // log q(theta^k | theta*) - log q(theta* | theta^k)
};

/// Both proposals are symmetric, so the correction is always zero.
inline ThetaProposal propose_theta(const HyperProposal& p, const Vector& theta_k, Rng& rng) {
  ThetaProposal out;
  if (const auto* m = std::get_if<MultiplicativeProposal>(&p)) {
    out.theta = theta_k;
    for (Eigen::Index i = 0; i < theta_k.size(); ++i) out.theta[i] *= m->draw_factor(rng);
  } else {
    const auto& rw = std::get<GaussianRandomWalk>(p);
    if (rw.precision().rows() != theta_k.size()) {
      throw DimensionMismatch("random walk dimension differs from theta");
    }
    out.theta = theta_k + rw.increment(rng);
  }
  return out;
}

/// Scaling constant 2.38^2 / dim(theta).
inline double default_rw_scale(int dim) { return dim > 0 ? 2.38 * 2.38 / dim : 1.0; }

}  // namespace lgm
