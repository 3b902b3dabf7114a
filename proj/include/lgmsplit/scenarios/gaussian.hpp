#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "lgmsplit/cholesky.hpp"
#include "lgmsplit/gaussian_likelihood.hpp"
#include "lgmsplit/gmrf.hpp"
#include "lgmsplit/model.hpp"
#include "lgmsplit/random.hpp"
#include "lgmsplit/scenarios/covariates.hpp"

namespace lgm {

/// Spatial mean/log-variance model on a lattice GMRF:
///   mu  = X_mu  beta_mu  + A u_mu  + eps_mu
///   tau = X_tau beta_tau + A u_tau + eps_tau
/// theta = (sigma_u_mu, kappa_u_mu, sigma_eps_mu, sigma_u_tau, kappa_u_tau, sigma_eps_tau).
struct GaussianScenario {
  int sites = 60;
  int years = 30;
  int lattice_rows = 10;
  int lattice_cols = 10;
  int covariates = 1;  // per linear predictor, intercept excluded
  GaussianLikelihood::Mode observation = GaussianLikelihood::Mode::MeanLogVariance;
  double known_variance = 1.0;
  double kappa_beta_mu = 0.0025;
  double kappa_beta_tau = 0.25;
  std::vector<double> theta_true{1.0, 3.0, 0.3, 0.5, 3.0, 0.2};
  double prior_log_sd = 0.5;  // lognormal priors centred on theta_true

  int nodes() const { return lattice_rows * lattice_cols; }
};

inline const std::vector<std::string>& gaussian_theta_names() {
  static const std::vector<std::string> names{"sigma_u_mu",  "kappa_u_mu",  "sigma_eps_mu",
                                              "sigma_u_tau", "kappa_u_tau", "sigma_eps_tau"};
  return names;
}

struct GaussianDataset {
  DenseMatrix site_xy;  // sites x 2, in the unit square
  DenseMatrix x_mu;     // sites x (p + 1), intercept first
  DenseMatrix x_tau;
  std::vector<std::vector<double>> y;  // y[i] = observations at site i
  // truth
  Vector theta;
  Vector beta_mu;
  Vector beta_tau;
  Vector eta;  // (mu, tau)
};

/// Lattice with spacing h = 1 / cols; node (r, c) sits at ((c + 1/2) h, (r + 1/2) h).
inline int nearest_node(double x, double y, int rows, int cols) {
  const double h = 1.0 / cols;
  const int c = std::clamp(static_cast<int>(std::floor(x / h)), 0, cols - 1);
  const int r = std::clamp(static_cast<int>(std::floor(y / h)), 0, rows - 1);
  return r * cols + c;
}

/// Precision of the lattice Matern field with marginal standard deviation
/// sigma and inverse range kappa (in unit-square coordinates), spacing h.
class LatticeMaternField {
 public:
  LatticeMaternField(int rows, int cols) : basis_(rows, cols), h_(1.0 / cols) {}

  SparseSpdMatrix precision(double sigma, double kappa) const {
    if (!(sigma > 0.0) || !(kappa > 0.0)) throw NonPositiveScale("Matern field: sigma and kappa must be positive");
    const double scale = 1.0 / (4.0 * std::numbers::pi * kappa * kappa * sigma * sigma * h_ * h_);
    return basis_.precision(kappa * h_, scale);
  }

  int size() const noexcept { return basis_.size(); }

 private:
  MaternLatticeBasis basis_;
  double h_;
};

inline SparseMatrix site_projection(const DenseMatrix& site_xy, int rows, int cols) {
  std::vector<Triplet> entries;
  for (Eigen::Index i = 0; i < site_xy.rows(); ++i) {
    entries.emplace_back(static_cast<int>(i), nearest_node(site_xy(i, 0), site_xy(i, 1), rows, cols), 1.0);
  }
  SparseMatrix a(site_xy.rows(), rows * cols);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

/// Z = [X_mu A 0 0; 0 0 X_tau A] for nu = (beta_mu, u_mu, beta_tau, u_tau).
inline SparseMatrix gaussian_design(const DenseMatrix& x_mu, const DenseMatrix& x_tau, const SparseMatrix& a) {
  const int sites = static_cast<int>(x_mu.rows());
  const int pm = static_cast<int>(x_mu.cols());
  const int pt = static_cast<int>(x_tau.cols());
  const int nodes = static_cast<int>(a.cols());
  if (x_tau.rows() != sites || a.rows() != sites) throw DimensionMismatch("gaussian_design: row counts differ");
  const int off_tau = pm + nodes;
  std::vector<Triplet> entries;
  for (int i = 0; i < sites; ++i) {
    for (int k = 0; k < pm; ++k) entries.emplace_back(i, k, x_mu(i, k));
    for (int k = 0; k < pt; ++k) entries.emplace_back(sites + i, off_tau + k, x_tau(i, k));
  }
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      entries.emplace_back(static_cast<int>(it.row()), pm + static_cast<int>(it.col()), it.value());
      entries.emplace_back(sites + static_cast<int>(it.row()), off_tau + pt + static_cast<int>(it.col()), it.value());
    }
  }
  SparseMatrix z(2 * sites, off_tau + pt + nodes);
  z.setFromTriplets(entries.begin(), entries.end());
  return z;
}

inline LogPriorFn lognormal_prior(Vector median, double log_sd) {
  return [median = std::move(median), log_sd](const Vector& theta) {
    if (theta.size() != median.size()) throw DimensionMismatch("prior: theta length");
    double lp = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      if (!(theta[i] > 0.0)) return kNegInf;
      const double l = std::log(theta[i]);
      const double d = (l - std::log(median[i])) / log_sd;
      lp += -l - 0.5 * d * d;
    }
    return lp;
  };
}

/// Model for the sites and observations of `data` on a rows x cols lattice.
inline ModelSpec<GaussianLikelihood> build_gaussian_model(const GaussianScenario& sc, const GaussianDataset& data) {
  const int sites = static_cast<int>(data.y.size());
  if (sc.nodes() < sites) {
    throw DimensionMismatch("build_gaussian_model: " + std::to_string(sc.nodes()) + " lattice nodes for " +
                            std::to_string(sites) + " sites");
  }
  if (data.x_mu.rows() != sites || data.x_tau.rows() != sites || data.site_xy.rows() != sites) {
    throw DimensionMismatch("build_gaussian_model: dataset blocks disagree on the number of sites");
  }
  if (sc.theta_true.size() != 6) throw DimensionMismatch("build_gaussian_model: theta has 6 entries");
  const SparseMatrix a = site_projection(data.site_xy, sc.lattice_rows, sc.lattice_cols);
  SparseMatrix z = gaussian_design(data.x_mu, data.x_tau, a);
  const int pm = static_cast<int>(data.x_mu.cols());
  const int pt = static_cast<int>(data.x_tau.cols());

  auto field = std::make_shared<const LatticeMaternField>(sc.lattice_rows, sc.lattice_cols);
  const double kbm = sc.kappa_beta_mu;
  const double kbt = sc.kappa_beta_tau;
  ThetaPrecisionFn q_nu = [field, pm, pt, kbm, kbt](const Vector& th) {
    return block_diag({SparseSpdMatrix::identity(pm, kbm), field->precision(th[0], th[1]),
                       SparseSpdMatrix::identity(pt, kbt), field->precision(th[3], th[4])});
  };
  ThetaVectorFn q_eps = [sites](const Vector& th) {
    Vector d(2 * sites);
    d.head(sites).setConstant(1.0 / (th[2] * th[2]));
    d.tail(sites).setConstant(1.0 / (th[5] * th[5]));
    return d;
  };
  const int n_nu = static_cast<int>(z.cols());
  LatentStructure structure(std::move(z), q_eps, q_nu, Vector::Zero(n_nu));

  GaussianLikelihood lik(data.y, sc.observation, sc.known_variance);
  Vector theta_med = Eigen::Map<const Vector>(sc.theta_true.data(), 6);

  Vector eta0(2 * sites);
  double pooled = 0.0;
  int pooled_n = 0;
  for (int i = 0; i < sites; ++i) {
    const auto& y = data.y[static_cast<std::size_t>(i)];
    double m = 0.0;
    for (double v : y) m += v;
    m /= static_cast<double>(y.size());
    double ss = 0.0;
    for (double v : y) ss += (v - m) * (v - m);
    eta0[i] = m;
    eta0[sites + i] = y.size() > 1 && ss > 0.0 ? std::log(ss / static_cast<double>(y.size() - 1)) : kNegInf;
    pooled += ss;
    pooled_n += static_cast<int>(y.size()) - 1;
  }
  const double fallback = pooled > 0.0 && pooled_n > 0 ? std::log(pooled / pooled_n) : 0.0;
  for (int i = 0; i < sites; ++i) {
    if (sc.observation == GaussianLikelihood::Mode::KnownVariance) {
      eta0[sites + i] = std::log(sc.known_variance);
    } else if (!std::isfinite(eta0[sites + i])) {
      eta0[sites + i] = fallback;
    }
  }

  ModelSpec<GaussianLikelihood> model{std::move(structure), std::move(lik), lognormal_prior(theta_med, sc.prior_log_sd),
                                      theta_med, eta0, true, gaussian_theta_names(), {}, {}};
  for (int i = 0; i < sites; ++i) model.eta_names.push_back("mu_" + std::to_string(i));
  for (int i = 0; i < sites; ++i) model.eta_names.push_back("tau_" + std::to_string(i));
  const int nodes = sc.nodes();
  for (int k = 0; k < pm; ++k) model.nu_names.push_back("beta_mu_" + std::to_string(k));
  for (int k = 0; k < nodes; ++k) model.nu_names.push_back("u_mu_" + std::to_string(k));
  for (int k = 0; k < pt; ++k) model.nu_names.push_back("beta_tau_" + std::to_string(k));
  for (int k = 0; k < nodes; ++k) model.nu_names.push_back("u_tau_" + std::to_string(k));
  model.validate();
  return model;
}

/// Sites, covariates, latent truth and observations. Latent values are drawn
/// from their priors at theta_true on the scenario lattice.
inline GaussianDataset simulate_gaussian_data(const GaussianScenario& sc, Rng& rng) {
  if (sc.sites < 1 || sc.years < 1) throw BadDimension("simulate_gaussian_data: need sites and years");
  GaussianDataset d;
  d.site_xy.resize(sc.sites, 2);
  for (int i = 0; i < sc.sites; ++i) {
    d.site_xy(i, 0) = uniform01(rng);
    d.site_xy(i, 1) = uniform01(rng) * sc.lattice_rows / sc.lattice_cols;
  }
  d.x_mu = standardized_covariates(sc.sites, sc.covariates, rng);
  d.x_tau = standardized_covariates(sc.sites, sc.covariates, rng);
  d.theta = Eigen::Map<const Vector>(sc.theta_true.data(), static_cast<Eigen::Index>(sc.theta_true.size()));
  const Vector& th = d.theta;
  const int p1 = sc.covariates + 1;
  d.beta_mu = standard_normal_vector(rng, p1) / std::sqrt(sc.kappa_beta_mu);
  d.beta_tau = standard_normal_vector(rng, p1) / std::sqrt(sc.kappa_beta_tau);
  const LatticeMaternField field(sc.lattice_rows, sc.lattice_cols);
  const Vector zero = Vector::Zero(sc.nodes());
  const Vector u_mu = sample_gmrf(cholesky(field.precision(th[0], th[1])), zero, rng);
  const Vector u_tau = sample_gmrf(cholesky(field.precision(th[3], th[4])), zero, rng);
  const SparseMatrix a = site_projection(d.site_xy, sc.lattice_rows, sc.lattice_cols);
  d.eta.resize(2 * sc.sites);
  d.eta.head(sc.sites) = d.x_mu * d.beta_mu + a * u_mu + th[2] * standard_normal_vector(rng, sc.sites);
  d.eta.tail(sc.sites) = d.x_tau * d.beta_tau + a * u_tau + th[5] * standard_normal_vector(rng, sc.sites);
  d.y.assign(static_cast<std::size_t>(sc.sites), {});
  for (int i = 0; i < sc.sites; ++i) {
    const double sd = sc.observation == GaussianLikelihood::Mode::KnownVariance
                          ? std::sqrt(sc.known_variance)
                          : std::exp(0.5 * d.eta[sc.sites + i]);
    for (int t = 0; t < sc.years; ++t) {
      d.y[static_cast<std::size_t>(i)].push_back(d.eta[i] + sd * standard_normal(rng));
    }
  }
  return d;
}

}  // namespace lgm
