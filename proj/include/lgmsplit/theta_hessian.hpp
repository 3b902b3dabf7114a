#pragma once

#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "lgmsplit/error.hpp"
#include "lgmsplit/model.hpp"
#include "lgmsplit/sampler.hpp"

namespace lgm {

using ObjectiveFn = std::function<double(const Vector&)>;

/// Central-difference Hessian with a common step, symmetrized.
inline DenseMatrix finite_difference_hessian(const ObjectiveFn& f, const Vector& x, double h) {
  const Eigen::Index d = x.size();
  DenseMatrix out(d, d);
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector xp = x;
    Vector xm = x;
    xp[i] += h;
    xm[i] -= h;
    out(i, i) = (f(xp) - 2.0 * f0 + f(xm)) / (h * h);
    for (Eigen::Index j = 0; j < i; ++j) {
      Vector a = x, b = x, c = x, e = x;
      a[i] += h; a[j] += h;
      b[i] += h; b[j] -= h;
      c[i] -= h; c[j] += h;
      e[i] -= h; e[j] -= h;
      out(i, j) = out(j, i) = (f(a) - f(b) - f(c) + f(e)) / (4.0 * h * h);
    }
  }
  return out;
}

inline Vector finite_difference_gradient(const ObjectiveFn& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x;
    Vector xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

struct ThetaMode {
  Vector theta0;
  DenseMatrix hessian;
  int iterations = 0;
};

/// Newton ascent on `objective` with finite-difference derivatives, then the
/// finite-difference Hessian at the mode. Throws HessianNotNegativeDefinite
/// when that Hessian has a non-negative eigenvalue.
inline ThetaMode maximize_with_hessian(const ObjectiveFn& objective, Vector theta, double step = 1e-4,
                                       int max_iterations = 100, double tolerance = 1e-5) {
  double value = objective(theta);
  if (!std::isfinite(value)) throw NonConvergence("theta mode search: objective not finite at start");
  ThetaMode out;
  bool converged = theta.size() == 0;
  for (int it = 0; it < max_iterations && !converged; ++it) {
    out.iterations = it + 1;
    const Vector g = finite_difference_gradient(objective, theta, step);
    if (!g.allFinite()) throw NonConvergence("theta mode search: gradient not finite");
    if (g.cwiseAbs().maxCoeff() < tolerance) {
      converged = true;
      break;
    }
    const DenseMatrix h = finite_difference_hessian(objective, theta, step);
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    Vector dir;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 80; ++attempt) {
      DenseMatrix m = -h;
      m.diagonal().array() += ridge;
      Eigen::LLT<DenseMatrix> llt(m);
      if (llt.info() == Eigen::Success) {
        dir = llt.solve(g);
        break;
      }
      ridge = ridge == 0.0 ? 1e-8 * scale : 4.0 * ridge;
    }
    if (dir.size() != theta.size()) throw NonConvergence("theta mode search: no ascent direction");
    double alpha = 1.0;
    bool moved = false;
    const double slack = 1e-12 * (1.0 + std::abs(value));
    for (int halving = 0; halving < 60; ++halving) {
      const Vector trial = theta + alpha * dir;
      const double v = objective(trial);
      if (std::isfinite(v) && v >= value - slack) {
        const double change = (alpha * dir).cwiseAbs().maxCoeff();
        theta = trial;
        value = std::max(value, v);
        moved = true;
        if (change < 1e-10) converged = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) converged = g.cwiseAbs().maxCoeff() < 1e3 * tolerance;
    if (!moved && !converged) throw NonConvergence("theta mode search: line search failed");
  }
  if (!converged) {
    throw NonConvergence("theta mode search: no convergence after " + std::to_string(max_iterations) +
                         " iterations");
  }
  out.theta0 = theta;
  out.hessian = finite_difference_hessian(objective, theta, step);
  if (theta.size() > 0) {
    Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(-out.hessian);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-8 * std::max(1.0, top))) {
      throw HessianNotNegativeDefinite("Hessian of log pi(theta | eta) is not negative definite at the mode");
    }
  }
  return out;
}

/// Mode theta0 of log pi(theta | eta_hat) and the finite-difference Hessian
/// there, for the fixed Gaussian random-walk proposal.
template <PartitionedLikelihood Lik>
ThetaMode hessian_for_theta_proposal(const ModelSpec<Lik>& model, const Vector& eta_hat,
                                     const Vector& theta_start, double step = 1e-4) {
  ThetaEvaluator ev(model.structure, model.log_prior);
  ObjectiveFn objective = [&](const Vector& theta) {
    const ThetaTerms t = ev.terms(theta);
    if (!t.admissible) return kNegInf;
    return ev.marginal(t, eta_hat).value + t.log_prior;
  };
  return maximize_with_hessian(objective, theta_start, step);
}

}  // namespace lgm
