#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lgmsplit/likelihood.hpp"

namespace lgm {

/// GEV parameters with location and scale on the log scale.
struct GevParams {
  double lambda = 0.0;  // log mu
  double tau = 0.0;     // log sigma
  double xi = 0.0;
};

namespace detail {

// a = log(1 + xi z) / xi and c = (a - z / (1 + xi z)) / xi, both smooth through xi = 0.
struct GevTerms {
  double a;
  double c;
};

inline GevTerms gev_terms(double z, double xi) {
  const double s = xi * z;
  if (std::abs(s) < 1e-3) {
    // power series in s; reduces to the Gumbel limit a = z, c = z^2 / 2 at xi = 0
    double a = 0.0;
    double c = 0.0;
    double zk = z;      // z * s^(k-1)
    double zc = z * z;  // z^2 * s^(k-2)
    for (int k = 1; k <= 9; ++k) {
      const double sign = (k % 2 == 1) ? 1.0 : -1.0;
      a += sign * zk / k;
      if (k >= 2) {
        c += -sign * zc * (k - 1) / k;
        zc *= s;
      }
      zk *= s;
    }
    return {a, c};
  }
  const double t = 1.0 + s;
  const double a = std::log1p(s) / xi;
  return {a, (a - z / t) / xi};
}

}  // namespace detail

/// Log density at y. Returns -inf when 1 + xi (y - mu) / sigma <= 0.
inline double gev_log_density(double y, const GevParams& p) {
  const double z = (y - std::exp(p.lambda)) * std::exp(-p.tau);
  const double t = 1.0 + p.xi * z;
  if (!(t > 0.0)) return kNegInf;
  const double a = detail::gev_terms(z, p.xi).a;
  return -p.tau - (1.0 + p.xi) * a - std::exp(-a);
}

/// Log density and its gradient in (lambda, tau, xi).
inline double gev_log_density_gradient(double y, const GevParams& p, double grad[3]) {
  const double mu = std::exp(p.lambda);
  const double inv_sigma = std::exp(-p.tau);
  const double z = (y - mu) * inv_sigma;
  const double t = 1.0 + p.xi * z;
  if (!(t > 0.0)) {
    grad[0] = grad[1] = grad[2] = std::numeric_limits<double>::quiet_NaN();
    return kNegInf;
  }
  const auto [a, c] = detail::gev_terms(z, p.xi);
  const double e = std::exp(-a);
  const double gz = (e - (1.0 + p.xi)) / t;
  grad[0] = -gz * mu * inv_sigma;
  grad[1] = -1.0 - z * gz;
  grad[2] = c * (1.0 - e) - z / t;
  return -p.tau - (1.0 + p.xi) * a - e;
}

inline double gev_cdf(double y, const GevParams& p) {
  const double z = (y - std::exp(p.lambda)) * std::exp(-p.tau);
  const double t = 1.0 + p.xi * z;
  if (!(t > 0.0)) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-detail::gev_terms(z, p.xi).a));
}

/// Inverse cdf for u in (0, 1).
inline double gev_quantile(double u, const GevParams& p) {
  const double w = std::log(-std::log(u));
  // ((-log u)^(-xi) - 1) / xi, which tends to -w as xi -> 0
  const double g = std::abs(p.xi) < 1e-12 ? -w : std::expm1(-p.xi * w) / p.xi;
  return std::exp(p.lambda) + std::exp(p.tau) * g;
}

inline double gev_loglik(std::span<const double> y, const GevParams& p) {
  double sum = 0.0;
  for (double v : y) {
    const double l = gev_log_density(v, p);
    if (l == kNegInf) return kNegInf;
    sum += l;
  }
  return sum;
}

/// GEV observations grouped into partitions; eta = (lambda block, tau block, xi block)
/// and partition r owns {r, I + r, 2I + r}.
class GevLikelihood {
 public:
  explicit GevLikelihood(std::vector<std::vector<double>> observations)
      : layout_(PartitionLayout::interleaved(static_cast<int>(observations.size()), 3)),
        obs_(std::move(observations)) {
    for (std::size_t r = 0; r < obs_.size(); ++r) {
      if (obs_[r].empty()) throw BadDimension("GevLikelihood: partition " + std::to_string(r) + " has no data");
    }
  }

  const PartitionLayout& layout() const noexcept { return layout_; }
  int partitions() const noexcept { return static_cast<int>(obs_.size()); }
  std::span<const double> observations(int r) const { return obs_[static_cast<std::size_t>(r)]; }

  double log_lik(int r, const SmallVector& x) const {
    return gev_loglik(observations(r), {x[0], x[1], x[2]});
  }

  SmallVector gradient(int r, const SmallVector& x) const {
    const GevParams p{x[0], x[1], x[2]};
    SmallVector g = SmallVector::Zero(3);
    double gi[3];
    for (double v : observations(r)) {
      if (gev_log_density_gradient(v, p, gi) == kNegInf) {
        g.setConstant(std::numeric_limits<double>::quiet_NaN());
        return g;
      }
      g[0] += gi[0];
      g[1] += gi[1];
      g[2] += gi[2];
    }
    return g;
  }

  SmallMatrix hessian(int r, const SmallVector& x) const {
    return hessian_from_gradient(x, [&](const SmallVector& y) { return gradient(r, y); });
  }

 private:
  PartitionLayout layout_;
  std::vector<std::vector<double>> obs_;
};

struct GevFit {
  GevParams params;
  int iterations = 0;
};

/// Maximum likelihood for one sample by damped Newton with step halving,
/// started from Gumbel moment estimates.
inline GevFit gev_mle(std::span<const double> y, int partition = -1, int max_iter = 200) {
  if (y.size() < 2) throw NonConvergence("gev_mle: need at least two observations", partition);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size() - 1);
  if (!(var > 0.0)) {
    throw NonConvergence("gev_mle: degenerate sample (zero spread), log-scale would diverge",
                         partition);
  }
  const double sigma0 = std::sqrt(6.0 * var) / std::numbers::pi;
  const double mu0 = mean - std::numbers::egamma * sigma0;
  if (!(mu0 > 0.0)) throw NonConvergence("gev_mle: location must be positive on the log scale", partition);

  GevLikelihood lik({std::vector<double>(y.begin(), y.end())});
  SmallVector x(3);
  x << std::log(mu0), std::log(sigma0), 0.0;
  double value = lik.log_lik(0, x);
  const double tol = 1e-8 * static_cast<double>(y.size());
  for (int it = 1; it <= max_iter; ++it) {
    const SmallVector g = lik.gradient(0, x);
    if (g.cwiseAbs().maxCoeff() < tol) return {{x[0], x[1], x[2]}, it};
    const SmallMatrix h = lik.hessian(0, x);
    SmallVector step;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      const SmallMatrix m = -h + ridge * SmallMatrix::Identity(3, 3);
      Eigen::LLT<SmallMatrix> llt(m);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
      ridge = ridge == 0.0 ? 1e-6 * std::max(1.0, h.cwiseAbs().maxCoeff()) : 2.0 * ridge;
    }
    if (step.size() != 3) throw NonConvergence("gev_mle: Hessian could not be regularized", partition);
    double scale = 1.0;
    bool moved = false;
    // near the optimum the change in value drops below rounding noise
    const double slack = 1e-12 * (1.0 + std::abs(value));
    for (int halving = 0; halving < 50; ++halving) {
      const SmallVector trial = x + scale * step;
      const double v = lik.log_lik(0, trial);
      if (v >= value - slack && std::isfinite(v)) {
        x = trial;
        value = v;
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (x[1] < -20.0) throw NonConvergence("gev_mle: log-scale fell below -20", partition);
    if (!moved) {
      if (g.cwiseAbs().maxCoeff() < 1e3 * tol) return {{x[0], x[1], x[2]}, it};
      throw NonConvergence("gev_mle: line search failed", partition);
    }
  }
  throw NonConvergence("gev_mle: no convergence after " + std::to_string(max_iter) + " iterations",
                       partition);
}

/// Per-partition MLE laid out as an eta vector (lambda block, tau block, xi block).
inline Vector gev_mle_per_partition(const GevLikelihood& lik) {
  const int n = lik.partitions();
  Vector eta(3 * n);
  for (int r = 0; r < n; ++r) {
    const GevParams p = gev_mle(lik.observations(r), r).params;
    eta[r] = p.lambda;
    eta[n + r] = p.tau;
    eta[2 * n + r] = p.xi;
  }
  return eta;
}

}  // namespace lgm
