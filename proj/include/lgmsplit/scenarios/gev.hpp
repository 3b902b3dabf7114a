#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "lgmsplit/cholesky.hpp"
#include "lgmsplit/gev.hpp"
#include "lgmsplit/gmrf.hpp"
#include "lgmsplit/model.hpp"
#include "lgmsplit/random.hpp"
#include "lgmsplit/scenarios/covariates.hpp"

namespace lgm {

/// Seasonal GEV model for monthly maxima of J rivers. Partition r = 12 j + m.
///   lambda = X beta_lambda + A u_lambda + eps_lambda        (log location)
///   tau    = X beta_tau    + A u_tau    + eps_tau           (log scale)
///   xi     = 1 beta_xi + (1_J (x) I_12) u_xi + eps_xi       (shape)
/// u blocks are seasonal (12 months, circular band precision) with one block
/// per intercept/covariate. theta = (log psi_lambda[0..p], log psi_tau[0..p],
/// log psi_xi, log s2_eps_lambda, log s2_eps_tau, log s2_eps_xi).
struct GevScenario {
  int rivers = 3;
  int years = 60;
  int covariates = 1;
  double kappa = 1.0;
  double sigma_beta_lambda = 4.0;
  double sigma_beta_tau = 4.0;
  double sigma_beta_xi = 2.0;
  // Simulation truths. Regression weights are fixed; seasonal and
  // unstructured effects are drawn from their priors at theta_true.
  std::vector<double> beta_lambda_true{std::log(50.0), 0.3};
  std::vector<double> beta_tau_true{std::log(15.0), 0.2};
  double beta_xi_true = 0.1;
  std::vector<double> psi_lambda_true{0.2, 0.05};
  std::vector<double> psi_tau_true{0.1, 0.02};
  double psi_xi_true = 0.02;
  double s2_eps_lambda_true = 0.01;
  double s2_eps_tau_true = 0.01;
  double s2_eps_xi_true = 0.0025;
  double prior_sd = 1.0;  // Gaussian priors on theta, centred on the truth

  int partitions() const { return 12 * rivers; }
  int p1() const { return covariates + 1; }
  int n_theta() const { return 2 * p1() + 4; }

  /// Offsets of the nu blocks (beta_l, u_l, beta_t, u_t, beta_x, u_x).
  int off_u_lambda() const { return p1(); }
  int off_beta_tau() const { return p1() + 12 * p1(); }
  int off_u_tau() const { return off_beta_tau() + p1(); }
  int off_beta_xi() const { return off_u_tau() + 12 * p1(); }
  int off_u_xi() const { return off_beta_xi() + 1; }
  int n_nu() const { return off_u_xi() + 12; }

  Vector theta_true() const {
    if (static_cast<int>(psi_lambda_true.size()) != p1() || static_cast<int>(psi_tau_true.size()) != p1()) {
      throw DimensionMismatch("GevScenario: psi truths need covariates + 1 entries");
    }
    Vector t(n_theta());
    int k = 0;
    for (double v : psi_lambda_true) t[k++] = std::log(v);
    for (double v : psi_tau_true) t[k++] = std::log(v);
    t[k++] = std::log(psi_xi_true);
    t[k++] = std::log(s2_eps_lambda_true);
    t[k++] = std::log(s2_eps_tau_true);
    t[k++] = std::log(s2_eps_xi_true);
    return t;
  }
};

inline std::vector<std::string> gev_theta_names(int p1) {
  std::vector<std::string> names;
  for (int i = 0; i < p1; ++i) names.push_back("log_psi_lambda_" + std::to_string(i));
  for (int i = 0; i < p1; ++i) names.push_back("log_psi_tau_" + std::to_string(i));
  names.push_back("log_psi_xi");
  names.push_back("log_s2_eps_lambda");
  names.push_back("log_s2_eps_tau");
  names.push_back("log_s2_eps_xi");
  return names;
}

inline std::vector<std::string> gev_nu_names(int p1) {
  std::vector<std::string> names;
  auto month = [](int m) { return std::string(m + 1 < 10 ? "m0" : "m") + std::to_string(m + 1); };
  for (const char* block : {"lambda", "tau"}) {
    for (int i = 0; i < p1; ++i) names.push_back(std::string("beta_") + block + "_" + std::to_string(i));
    for (int i = 0; i < p1; ++i) {
      for (int m = 0; m < 12; ++m) names.push_back(std::string("u_") + block + "_" + std::to_string(i) + "_" + month(m));
    }
  }
  names.push_back("beta_xi");
  for (int m = 0; m < 12; ++m) names.push_back("u_xi_" + month(m));
  return names;
}

inline std::vector<std::string> gev_eta_names(int rivers) {
  std::vector<std::string> names;
  for (const char* block : {"lambda", "tau", "xi"}) {
    for (int j = 0; j < rivers; ++j) {
      for (int m = 0; m < 12; ++m) {
        names.push_back(std::string(block) + "_j" + std::to_string(j + 1) + (m + 1 < 10 ? "_m0" : "_m") +
                        std::to_string(m + 1));
      }
    }
  }
  return names;
}

/// Indices of the seasonal random effects (u_lambda, u_tau, u_xi) within nu.
inline std::vector<int> gev_seasonal_indices(const GevScenario& sc) {
  std::vector<int> idx;
  for (int k = 0; k < 12 * sc.p1(); ++k) idx.push_back(sc.off_u_lambda() + k);
  for (int k = 0; k < 12 * sc.p1(); ++k) idx.push_back(sc.off_u_tau() + k);
  for (int k = 0; k < 12; ++k) idx.push_back(sc.off_u_xi() + k);
  return idx;
}

/// Z for the seasonal model; `x` is 12J x p (no intercept), row 12 j + m.
inline SparseMatrix gev_design(const GevScenario& sc, const DenseMatrix& x) {
  const int n = sc.partitions();
  const int p1 = sc.p1();
  if (x.rows() != n || x.cols() != sc.covariates) throw DimensionMismatch("gev_design: covariate matrix shape");
  std::vector<Triplet> entries;
  for (int r = 0; r < n; ++r) {
    const int m = r % 12;
    for (int i = 0; i < p1; ++i) {
      const double xi = i == 0 ? 1.0 : x(r, i - 1);
      entries.emplace_back(r, i, xi);
      entries.emplace_back(r, sc.off_u_lambda() + 12 * i + m, xi);
      entries.emplace_back(n + r, sc.off_beta_tau() + i, xi);
      entries.emplace_back(n + r, sc.off_u_tau() + 12 * i + m, xi);
    }
    entries.emplace_back(2 * n + r, sc.off_beta_xi(), 1.0);
    entries.emplace_back(2 * n + r, sc.off_u_xi() + m, 1.0);
  }
  SparseMatrix z(3 * n, sc.n_nu());
  z.setFromTriplets(entries.begin(), entries.end());
  return z;
}

/// Q_nu(theta): bdiag(s_bl^-2 I, diag(1/psi_l) (x) Q_u, s_bt^-2 I, diag(1/psi_t) (x) Q_u, s_bx^-2, Q_u / psi_x).
inline ThetaPrecisionFn gev_prior_precision(const GevScenario& sc) {
  auto q_u = std::make_shared<const SparseSpdMatrix>(circular_band_precision(sc.kappa, 12));
  const int p1 = sc.p1();
  const double bl = 1.0 / (sc.sigma_beta_lambda * sc.sigma_beta_lambda);
  const double bt = 1.0 / (sc.sigma_beta_tau * sc.sigma_beta_tau);
  const double bx = 1.0 / (sc.sigma_beta_xi * sc.sigma_beta_xi);
  return [q_u, p1, bl, bt, bx](const Vector& th) {
    const Vector inv_psi_l = (-th.segment(0, p1)).array().exp();
    const Vector inv_psi_t = (-th.segment(p1, p1)).array().exp();
    const double inv_psi_x = std::exp(-th[2 * p1]);
    return block_diag({SparseSpdMatrix::identity(p1, bl), kron_diag(inv_psi_l, *q_u), SparseSpdMatrix::identity(p1, bt),
                       kron_diag(inv_psi_t, *q_u), SparseSpdMatrix::identity(1, bx), q_u->scaled(inv_psi_x)});
  };
}

inline ThetaVectorFn gev_noise_precision(const GevScenario& sc) {
  const int n = sc.partitions();
  const int p1 = sc.p1();
  return [n, p1](const Vector& th) {
    Vector d(3 * n);
    d.segment(0, n).setConstant(std::exp(-th[2 * p1 + 1]));
    d.segment(n, n).setConstant(std::exp(-th[2 * p1 + 2]));
    d.segment(2 * n, n).setConstant(std::exp(-th[2 * p1 + 3]));
    return d;
  };
}

inline LogPriorFn gaussian_prior(Vector mean, double sd) {
  return [mean = std::move(mean), sd](const Vector& theta) {
    if (theta.size() != mean.size()) throw DimensionMismatch("prior: theta length");
    if (!theta.allFinite()) return kNegInf;
    return -0.5 * ((theta - mean) / sd).squaredNorm();
  };
}

struct GevDataset {
  DenseMatrix covariates;              // 12J x p, standardized
  std::vector<std::vector<double>> y;  // y[12 j + m] = yearly maxima
  // truth
  Vector theta;
  Vector nu;
  Vector eta;
};

/// Covariates, latent truth and data drawn by inverse-cdf sampling.
inline GevDataset simulate_gev_data(const GevScenario& sc, Rng& rng) {
  if (sc.rivers < 1) throw BadDimension("simulate_gev_data: need at least one river");
  if (sc.years < 30) throw BadDimension("simulate_gev_data: need at least 30 years");
  if (static_cast<int>(sc.beta_lambda_true.size()) != sc.p1() || static_cast<int>(sc.beta_tau_true.size()) != sc.p1()) {
    throw DimensionMismatch("simulate_gev_data: beta truths need covariates + 1 entries");
  }
  GevDataset d;
  d.covariates = river_month_covariates(sc.rivers, sc.covariates, rng);
  d.theta = sc.theta_true();
  const SparseSpdMatrix q_nu = gev_prior_precision(sc)(d.theta);
  d.nu = sample_gmrf(cholesky(q_nu), Vector::Zero(sc.n_nu()), rng);
  for (int i = 0; i < sc.p1(); ++i) {
    d.nu[i] = sc.beta_lambda_true[static_cast<std::size_t>(i)];
    d.nu[sc.off_beta_tau() + i] = sc.beta_tau_true[static_cast<std::size_t>(i)];
  }
  d.nu[sc.off_beta_xi()] = sc.beta_xi_true;
  const Vector q_eps = gev_noise_precision(sc)(d.theta);
  d.eta = gev_design(sc, d.covariates) * d.nu +
          Vector(standard_normal_vector(rng, q_eps.size()).array() / q_eps.array().sqrt());
  const int n = sc.partitions();
  d.y.assign(static_cast<std::size_t>(n), {});
  for (int r = 0; r < n; ++r) {
    const GevParams p{d.eta[r], d.eta[n + r], d.eta[2 * n + r]};
    auto& ys = d.y[static_cast<std::size_t>(r)];
    for (int t = 0; t < sc.years; ++t) {
      double u = uniform01(rng);
      while (u == 0.0) u = uniform01(rng);
      ys.push_back(gev_quantile(u, p));
    }
  }
  return d;
}

struct GevInitialEta {
  Vector eta;
  int fallbacks = 0;  // partitions where the MLE failed and moments were used
};

/// Per-partition MLE, falling back to Gumbel moment estimates where Newton fails.
inline GevInitialEta gev_initial_eta(const GevLikelihood& lik) {
  const int n = lik.partitions();
  GevInitialEta out;
  out.eta.resize(3 * n);
  for (int r = 0; r < n; ++r) {
    GevParams p;
    try {
      p = gev_mle(lik.observations(r), r).params;
    } catch (const NonConvergence&) {
      ++out.fallbacks;
      const auto y = lik.observations(r);
      double mean = 0.0;
      for (double v : y) mean += v;
      mean /= static_cast<double>(y.size());
      double var = 0.0;
      for (double v : y) var += (v - mean) * (v - mean);
      var /= std::max<double>(1.0, static_cast<double>(y.size()) - 1.0);
      const double sigma = std::max(1e-8, std::sqrt(6.0 * var) / std::numbers::pi);
      p = {std::log(std::max(1e-8, mean - std::numbers::egamma * sigma)), std::log(sigma), 0.0};
    }
    out.eta[r] = p.lambda;
    out.eta[n + r] = p.tau;
    out.eta[2 * n + r] = p.xi;
  }
  return out;
}

/// Model for a dataset; eta_init comes from the per-partition MLE and
/// theta_init from the prior mean (callers may replace both).
inline ModelSpec<GevLikelihood> build_gev_model(const GevScenario& sc, const GevDataset& data) {
  if (static_cast<int>(data.y.size()) != sc.partitions()) {
    throw DimensionMismatch("build_gev_model: dataset has " + std::to_string(data.y.size()) + " partitions, expected " +
                            std::to_string(sc.partitions()));
  }
  LatentStructure structure(gev_design(sc, data.covariates), gev_noise_precision(sc), gev_prior_precision(sc),
                            Vector::Zero(sc.n_nu()));
  GevLikelihood lik(data.y);
  const Vector eta0 = gev_initial_eta(lik).eta;
  const Vector prior_mean = sc.theta_true();
  ModelSpec<GevLikelihood> model{std::move(structure), std::move(lik), gaussian_prior(prior_mean, sc.prior_sd),
                                 prior_mean, eta0, false, gev_theta_names(sc.p1()), gev_eta_names(sc.rivers),
                                 gev_nu_names(sc.p1())};
  model.validate();
  return model;
}

}  // namespace lgm
