#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "lgmsplit/cholesky.hpp"
#include "lgmsplit/gmrf.hpp"
#include "lgmsplit/likelihood.hpp"
#include "lgmsplit/model.hpp"
#include "lgmsplit/proposals.hpp"
#include "lgmsplit/random.hpp"
#include "lgmsplit/trace.hpp"

namespace lgm {

struct SplitState {
  Vector eta;
  Vector nu;
  Vector theta;
  long iteration = 0;
};

struct ModeOptions {
  double tolerance = 1e-8;  // on the sup-norm of the gradient
  int max_iterations = 100;
  double initial_ridge = 1e-6;
};

/// Second-order expansion of log pi(eta | y, nu, theta) around its mode, one
/// block per partition. The proposal is N(mode, precision^{-1}) with
/// precision = Q_eps - H; H already includes any ridge that was applied.
struct GaussianApproximation {
  Vector mode;
  Vector shift;  // b = grad f(eta0) - H eta0
  std::vector<SmallMatrix> hessian;
  std::vector<double> ridge;
  std::vector<char> frozen;  // mode search failed; partition keeps its current value
  SparseSpdMatrix precision;
  std::optional<CholeskyFactor> factor;
  double max_gradient = 0.0;
  int newton_iterations = 0;

  int failures() const { return static_cast<int>(std::count(frozen.begin(), frozen.end(), 1)); }

  /// Assembled block-diagonal H.
  SparseMatrix hessian_matrix(const PartitionLayout& layout) const {
    std::vector<Triplet> entries;
    for (int i = 0; i < layout.count(); ++i) {
      const auto& idx = layout.indices(i);
      const SmallMatrix& h = hessian[static_cast<std::size_t>(i)];
      for (std::size_t a = 0; a < idx.size(); ++a) {
        for (std::size_t b = 0; b < idx.size(); ++b) {
          entries.emplace_back(idx[a], idx[b],
                               h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
        }
      }
    }
    SparseMatrix m(layout.n_eta(), layout.n_eta());
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
  }
};

namespace detail {

struct NewtonResult {
  SmallVector x;
  SmallVector gradient;
  bool converged = false;
  int iterations = 0;
};

// Maximizes f_i(x) - 1/2 sum q x^2 + sum c x for one partition.
template <PartitionedLikelihood Lik>
NewtonResult newton_partition(const Lik& lik, int i, const SmallVector& q, const SmallVector& c,
                              SmallVector x, const ModeOptions& opt) {
  const Eigen::Index d = x.size();
  auto objective = [&](const SmallVector& v) {
    const double f = lik.log_lik(i, v);
    if (!std::isfinite(f)) return kNegInf;
    return f - 0.5 * v.cwiseProduct(q).dot(v) + c.dot(v);
  };
  NewtonResult out;
  double phi = objective(x);
  if (!std::isfinite(phi)) {
    out.x = x;
    return out;
  }
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const SmallVector g = lik.gradient(i, x) - q.cwiseProduct(x) + c;
    out.iterations = it;
    if (!g.allFinite()) break;
    if (g.cwiseAbs().maxCoeff() < opt.tolerance) {
      out.x = x;
      out.gradient = g;
      out.converged = true;
      return out;
    }
    if (it == opt.max_iterations) break;
    const SmallMatrix h = lik.hessian(i, x);
    if (!h.allFinite()) break;
    SmallMatrix m = -h;
    m.diagonal() += q;
    SmallVector step;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 80; ++attempt) {
      SmallMatrix mr = m;
      mr.diagonal().array() += ridge;
      Eigen::LLT<SmallMatrix> llt(mr);
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
      ridge = ridge == 0.0 ? opt.initial_ridge * std::max(1.0, m.cwiseAbs().maxCoeff()) : 2.0 * ridge;
    }
    if (step.size() != d) break;
    double scale = 1.0;
    bool moved = false;
    const double slack = 1e-12 * (1.0 + std::abs(phi));
    for (int halving = 0; halving < 60; ++halving) {
      const SmallVector trial = x + scale * step;
      const double v = objective(trial);
      if (v >= phi - slack) {
        x = trial;
        phi = std::max(phi, v);
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }
  out.x = x;
  return out;
}

}  // namespace detail

/// Mode search given the diagonal of Q_eps and c = Q_eps Z nu. Partitions
/// whose Newton iteration fails are frozen at eta_init.
template <PartitionedLikelihood Lik>
GaussianApproximation find_mode(const Lik& lik, const Vector& q_eps, const Vector& c,
                                const Vector& eta_init, const ModeOptions& opt = {},
                                CholeskyCache* cache = nullptr) {
  const PartitionLayout& layout = lik.layout();
  const int n = layout.n_eta();
  if (q_eps.size() != n || c.size() != n || eta_init.size() != n) {
    throw DimensionMismatch("find_mode: vector lengths differ from eta");
  }
  GaussianApproximation ga;
  ga.mode = eta_init;
  ga.shift = Vector::Zero(n);
  ga.hessian.resize(static_cast<std::size_t>(layout.count()));
  ga.ridge.assign(static_cast<std::size_t>(layout.count()), 0.0);
  ga.frozen.assign(static_cast<std::size_t>(layout.count()), 0);
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(n) * 4);

  for (int i = 0; i < layout.count(); ++i) {
    const auto& idx = layout.indices(i);
    const SmallVector qi = layout.gather(q_eps, i);
    const SmallVector ci = layout.gather(c, i);
    const SmallVector x0 = layout.gather(eta_init, i);
    const Eigen::Index d = x0.size();
    detail::NewtonResult nr = detail::newton_partition(lik, i, qi, ci, x0, opt);
    ga.newton_iterations += nr.iterations;
    SmallMatrix h = SmallMatrix::Zero(d, d);
    SmallVector b = SmallVector::Zero(d);
    SmallVector mean = x0;
    SmallMatrix m = qi.asDiagonal();
    bool ok = nr.converged;
    if (ok) {
      h = lik.hessian(i, nr.x);
      ok = h.allFinite();
    }
    if (ok) {
      // ridge until Q_eps - H is positive definite
      double delta = 0.0;
      Eigen::LLT<SmallMatrix> llt;
      for (int attempt = 0; attempt < 200; ++attempt) {
        m = -h;
        m.diagonal() += qi;
        m.diagonal().array() += delta;
        llt.compute(m);
        if (llt.info() == Eigen::Success) break;
        delta = delta == 0.0 ? opt.initial_ridge : 2.0 * delta;
      }
      if (llt.info() != Eigen::Success) {
        ok = false;
      } else {
        h.diagonal().array() -= delta;
        ga.ridge[static_cast<std::size_t>(i)] = delta;
        b = lik.gradient(i, nr.x) - h * nr.x;
        // the proposal mean solves (Q_eps - H) m = c + b exactly, which keeps
        // the simplified acceptance ratio exact even at a mode accurate to 1e-8
        mean = llt.solve(ci + b);
        ga.max_gradient = std::max(ga.max_gradient, nr.gradient.cwiseAbs().maxCoeff());
      }
    }
    if (!ok) {
      ga.frozen[static_cast<std::size_t>(i)] = 1;
      h.setZero();
      b.setZero();
      mean = x0;
      m = qi.asDiagonal();
    }
    ga.hessian[static_cast<std::size_t>(i)] = h;
    layout.scatter(mean, i, ga.mode);
    layout.scatter(b, i, ga.shift);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index bb = 0; bb <= a; ++bb) {
        const int ga_idx = idx[static_cast<std::size_t>(a)];
        const int gb_idx = idx[static_cast<std::size_t>(bb)];
        entries.emplace_back(std::max(ga_idx, gb_idx), std::min(ga_idx, gb_idx), m(a, bb));
      }
    }
  }
  ga.precision = SparseSpdMatrix::from_triplets(n, entries);
  ga.factor = cache ? cache->factorize(ga.precision) : cholesky(ga.precision);
  return ga;
}

/// Mode search for the conditional posterior of eta at (nu, theta).
template <PartitionedLikelihood Lik>
GaussianApproximation find_mode(const Lik& lik, const LatentStructure& s, const Vector& nu,
                                const Vector& theta, const Vector& eta_init,
                                const ModeOptions& opt = {}) {
  const Vector q_eps = s.q_eps(theta);
  const Vector c = q_eps.cwiseProduct(s.z() * nu);
  return find_mode(lik, q_eps, c, eta_init, opt);
}

/// rho restricted to partition i: -1/2 x^T H_i x - b_i^T x.
inline double partition_rho(const GaussianApproximation& ga, const PartitionLayout& layout, int i,
                            const SmallVector& x) {
  const SmallMatrix& h = ga.hessian[static_cast<std::size_t>(i)];
  const SmallVector b = layout.gather(ga.shift, i);
  return -0.5 * x.dot(h * x) - b.dot(x);
}

/// r_i = f_i(x*) + rho_i(x*) - f_i(x^k) - rho_i(x^k), with the rho difference
/// evaluated in factored form to avoid cancellation.
template <PartitionedLikelihood Lik>
double data_rich_log_ratio(const Lik& lik, const GaussianApproximation& ga, int i,
                           const SmallVector& x_star, const SmallVector& x_k) {
  const double f_star = lik.log_lik(i, x_star);
  if (!std::isfinite(f_star)) return kNegInf;
  const double f_k = lik.log_lik(i, x_k);
  const SmallMatrix& h = ga.hessian[static_cast<std::size_t>(i)];
  const SmallVector b = lik.layout().gather(ga.shift, i);
  const SmallVector diff = x_star - x_k;
  const SmallVector sum = x_star + x_k;
  const double rho_diff = -0.5 * diff.dot(h * sum) - b.dot(diff);
  return (f_star - f_k) + rho_diff;
}

struct DataRichStep {
  Vector eta;
  std::vector<char> accepted;
  std::vector<double> log_ratio;
  int accepted_count = 0;
  int proposed_count = 0;
};

/// One independence-proposal update of eta. With `partitioned` each partition
/// is accepted on its own; otherwise the summed ratio decides for all of eta.
template <PartitionedLikelihood Lik>
DataRichStep sample_data_rich(const Lik& lik, const GaussianApproximation& ga, const Vector& eta_k,
                              Rng& rng, bool partitioned = true) {
  const PartitionLayout& layout = lik.layout();
  const Vector z = standard_normal_vector(rng, layout.n_eta());
  const Vector eta_star = ga.mode + ga.factor->whiten_inverse(z);
  DataRichStep out;
  out.eta = eta_k;
  out.accepted.assign(static_cast<std::size_t>(layout.count()), 0);
  out.log_ratio.assign(static_cast<std::size_t>(layout.count()), 0.0);
  double total = 0.0;
  for (int i = 0; i < layout.count(); ++i) {
    if (ga.frozen[static_cast<std::size_t>(i)]) continue;
    const double r = data_rich_log_ratio(lik, ga, i, layout.gather(eta_star, i), layout.gather(eta_k, i));
    out.log_ratio[static_cast<std::size_t>(i)] = r;
    total += r;
  }
  if (partitioned) {
    for (int i = 0; i < layout.count(); ++i) {
      const double u = uniform01(rng);
      if (ga.frozen[static_cast<std::size_t>(i)]) continue;
      ++out.proposed_count;
      if (std::log(u) < out.log_ratio[static_cast<std::size_t>(i)]) {
        out.accepted[static_cast<std::size_t>(i)] = 1;
        ++out.accepted_count;
        layout.scatter(layout.gather(eta_star, i), i, out.eta);
      }
    }
  } else {
    const double u = uniform01(rng);
    ++out.proposed_count;
    if (std::log(u) < total) {
      out.accepted_count = 1;
      for (int i = 0; i < layout.count(); ++i) {
        if (ga.frozen[static_cast<std::size_t>(i)]) continue;
        out.accepted[static_cast<std::size_t>(i)] = 1;
        layout.scatter(layout.gather(eta_star, i), i, out.eta);
      }
    }
  }
  return out;
}

/// Everything about one theta value that does not depend on eta, so the
/// current theta is factorized once and reused until a proposal is accepted.
struct ThetaTerms {
  Vector theta;
  bool admissible = false;
  double log_prior = kNegInf;
  Vector q_eps;
  double half_logdet_q_eps = 0.0;
  double prior_term = 0.0;  // 1/2 log det Q_nu - 1/2 mu^T Q_nu mu
  Vector q_nu_mu;
  std::optional<CholeskyFactor> conditional;  // factor of Q_nu + Z^T Q_eps Z
};

struct EtaMarginal {
  double value = kNegInf;  // log pi(eta | theta) up to a theta-free constant
  Vector conditional_mean;
};

class ThetaEvaluator {
 public:
  ThetaEvaluator(const LatentStructure& s, LogPriorFn prior) : s_(&s), prior_(std::move(prior)) {}

  ThetaTerms terms(const Vector& theta) {
    ThetaTerms t;
    t.theta = theta;
    t.log_prior = prior_ ? prior_(theta) : 0.0;
    if (!std::isfinite(t.log_prior)) return t;
    try {
      t.q_eps = s_->q_eps(theta);
      t.half_logdet_q_eps = 0.5 * t.q_eps.array().log().sum();
      const SparseSpdMatrix q_nu = s_->q_nu(theta);
      const CholeskyFactor qf = q_nu_cache_.factorize(q_nu);
      t.prior_term = 0.5 * qf.log_det();
      if (s_->mu_nu().size() > 0 && !s_->mu_nu().isZero(0.0)) {
        t.q_nu_mu = q_nu.multiply(s_->mu_nu());
        t.prior_term -= 0.5 * s_->mu_nu().dot(t.q_nu_mu);
      } else {
        t.q_nu_mu = Vector::Zero(s_->n_nu());
      }
      t.conditional = conditional_cache_.factorize(s_->conditional_precision(q_nu, t.q_eps));
    } catch (const Error&) {
      return ThetaTerms{theta, false, t.log_prior, {}, 0.0, 0.0, {}, std::nullopt};
    }
    t.admissible = true;
    return t;
  }

  EtaMarginal marginal(const ThetaTerms& t, const Vector& eta) const {
    EtaMarginal m;
    if (!t.admissible) return m;
    const Vector rhs = t.q_nu_mu + s_->z_transpose() * t.q_eps.cwiseProduct(eta);
    m.conditional_mean = t.conditional->solve(rhs);
    m.value = t.half_logdet_q_eps - 0.5 * eta.dot(t.q_eps.cwiseProduct(eta)) + t.prior_term -
              0.5 * t.conditional->log_det() + 0.5 * m.conditional_mean.dot(rhs);
    return m;
  }

  const LatentStructure& structure() const noexcept { return *s_; }

 private:
  const LatentStructure* s_;
  LogPriorFn prior_;
  CholeskyCache q_nu_cache_;
  CholeskyCache conditional_cache_;
};

/// log pi(eta | theta) up to a constant, through sparse factorizations only.
/// -inf when a precision fails to factorize.
inline double log_eta_marginal(const LatentStructure& s, const Vector& theta, const Vector& eta) {
  ThetaEvaluator ev(s, {});
  return ev.marginal(ev.terms(theta), eta).value;
}

inline bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

/// log[pi(theta* | eta) / pi(theta^k | eta)] including the prior ratio.
inline double log_theta_posterior_ratio(const LatentStructure& s, const Vector& theta_star,
                                        const Vector& theta_k, const Vector& eta,
                                        const LogPriorFn& log_prior = {}) {
  if (bitwise_equal(theta_star, theta_k)) return 0.0;
  ThetaEvaluator ev(s, log_prior);
  const ThetaTerms tk = ev.terms(theta_k);
  if (!tk.admissible) throw Error("log_theta_posterior_ratio: current theta is not admissible");
  const ThetaTerms ts = ev.terms(theta_star);
  if (!ts.admissible) return kNegInf;
  return (ev.marginal(ts, eta).value + ts.log_prior) - (ev.marginal(tk, eta).value + tk.log_prior);
}

struct DataPoorStep {
  bool accepted = false;
  double log_ratio = 0.0;
};

/// Joint (nu, theta) update: accept/reject on theta alone, then draw nu from
/// its exact full conditional only when the proposal is accepted.
inline DataPoorStep sample_data_poor(ThetaEvaluator& evaluator, ThetaTerms& current, SplitState& state,
                                     const HyperProposal& proposal, Rng& rng) {
  const ThetaProposal prop = propose_theta(proposal, state.theta, rng);
  const double u = uniform01(rng);
  DataPoorStep out;
  const EtaMarginal mk = evaluator.marginal(current, state.eta);
  if (bitwise_equal(prop.theta, state.theta)) {
    out.accepted = true;
    state.nu = mk.conditional_mean + current.conditional->whiten_inverse(
                                         standard_normal_vector(rng, current.conditional->size()));
    return out;
  }
  ThetaTerms star = evaluator.terms(prop.theta);
  if (!star.admissible) {
    out.log_ratio = kNegInf;
    return out;
  }
  const EtaMarginal ms = evaluator.marginal(star, state.eta);
  out.log_ratio = (ms.value + star.log_prior) - (mk.value + current.log_prior) + prop.log_q_correction;
  if (std::log(u) < out.log_ratio) {
    out.accepted = true;
    state.nu = ms.conditional_mean +
               star.conditional->whiten_inverse(standard_normal_vector(rng, star.conditional->size()));
    state.theta = prop.theta;
    current = std::move(star);
  }
  return out;
}

struct ChainStats {
  long data_rich_proposed = 0;
  long data_rich_accepted = 0;
  long data_poor_proposed = 0;
  long data_poor_accepted = 0;
  long mode_failures = 0;
  long ridged_blocks = 0;
  double max_abs_log_ratio = 0.0;  // over finite data-rich ratios

  double data_rich_rate() const {
    return data_rich_proposed ? static_cast<double>(data_rich_accepted) / data_rich_proposed : 0.0;
  }
  double data_poor_rate() const {
    return data_poor_proposed ? static_cast<double>(data_poor_accepted) / data_poor_proposed : 0.0;
  }

  ChainStats& operator+=(const ChainStats& o) {
    data_rich_proposed += o.data_rich_proposed;
    data_rich_accepted += o.data_rich_accepted;
    data_poor_proposed += o.data_poor_proposed;
    data_poor_accepted += o.data_poor_accepted;
    mode_failures += o.mode_failures;
    ridged_blocks += o.ridged_blocks;
    max_abs_log_ratio = std::max(max_abs_log_ratio, o.max_abs_log_ratio);
    return *this;
  }
};

struct SamplerOptions {
  bool partitioned = true;
  ModeOptions mode;
};

/// Two-block Gibbs sampler for one chain: eta by the Gaussian-approximation
/// independence proposal, then (nu, theta) jointly.
template <PartitionedLikelihood Lik>
class SplitSampler {
 public:
  SplitSampler(const ModelSpec<Lik>& model, HyperProposal proposal, SamplerOptions opts = {})
      : model_(&model),
        proposal_(std::move(proposal)),
        opts_(opts),
        evaluator_(model.structure, model.log_prior) {
    model.validate();
    if (std::holds_alternative<MultiplicativeProposal>(proposal_) && model.n_theta() > 0 &&
        !model.theta_positive) {
      throw ConfigError("multiplicative proposal requires positive hyperparameters");
    }
  }

  /// Sets theta and draws nu from its full conditional given eta.
  SplitState initialize(const Vector& theta, const Vector& eta, Rng& rng) {
    current_ = evaluator_.terms(theta);
    if (!current_.admissible) throw Error("initial theta is not admissible");
    SplitState s;
    s.theta = theta;
    s.eta = eta;
    const EtaMarginal m = evaluator_.marginal(current_, eta);
    s.nu = m.conditional_mean +
           current_.conditional->whiten_inverse(standard_normal_vector(rng, current_.conditional->size()));
    return s;
  }

  /// Whether theta can start a chain (finite prior, factorizable precisions).
  bool admissible(const Vector& theta) { return evaluator_.terms(theta).admissible; }

  void step(SplitState& state, Rng& rng) {
    const Vector c = current_.q_eps.cwiseProduct(model_->structure.z() * state.nu);
    const GaussianApproximation ga =
        find_mode(model_->likelihood, current_.q_eps, c, state.eta, opts_.mode, &proposal_cache_);
    const DataRichStep rich = sample_data_rich(model_->likelihood, ga, state.eta, rng, opts_.partitioned);
    stats_.data_rich_proposed += rich.proposed_count;
    stats_.data_rich_accepted += rich.accepted_count;
    stats_.mode_failures += ga.failures();
    for (std::size_t i = 0; i < ga.ridge.size(); ++i) {
      if (ga.ridge[i] > 0.0) ++stats_.ridged_blocks;
      if (!ga.frozen[i] && std::isfinite(rich.log_ratio[i])) {
        stats_.max_abs_log_ratio = std::max(stats_.max_abs_log_ratio, std::abs(rich.log_ratio[i]));
      }
    }
    state.eta = rich.eta;

    const DataPoorStep poor = sample_data_poor(evaluator_, current_, state, proposal_, rng);
    ++stats_.data_poor_proposed;
    if (poor.accepted) ++stats_.data_poor_accepted;
    ++state.iteration;
  }

  const ChainStats& stats() const noexcept { return stats_; }
  const HyperProposal& proposal() const noexcept { return proposal_; }

 private:
  const ModelSpec<Lik>* model_;
  HyperProposal proposal_;
  SamplerOptions opts_;
  ThetaEvaluator evaluator_;
  ThetaTerms current_;
  CholeskyCache proposal_cache_{Ordering::Natural};
  ChainStats stats_;
};

template <PartitionedLikelihood Lik>
void gibbs_step(SplitSampler<Lik>& sampler, SplitState& state, Rng& rng) {
  sampler.step(state, rng);
}

struct RecordSelection {
  bool eta = false;
  bool nu = true;
  bool theta = true;
};

struct ChainConfig {
  long iterations = 50000;  // total, burn-in included
  long burnin = 10000;
  std::uint64_t seed = 1;
  HyperProposal proposal;
  SamplerOptions sampler;
  RecordSelection record;
  double init_jitter = 0.1;  // sd of the per-chain perturbation of theta_init
  std::string fingerprint;
};

struct ChainResult {
  ChainTrace trace;
  SplitState final_state;
  ChainStats stats;
};

template <PartitionedLikelihood Lik>
std::vector<std::string> recorded_names(const ModelSpec<Lik>& model, const RecordSelection& rec) {
  std::vector<std::string> names;
  auto append = [&](const std::vector<std::string>& given, const char* stem, int n) {
    const auto use = given.empty() ? indexed_names(stem, n) : given;
    names.insert(names.end(), use.begin(), use.end());
  };
  if (rec.eta) append(model.eta_names, "eta", model.structure.n_eta());
  if (rec.nu) append(model.nu_names, "nu", model.structure.n_nu());
  if (rec.theta) append(model.theta_names, "theta", model.n_theta());
  return names;
}

template <PartitionedLikelihood Lik>
ChainResult run_chain(const ModelSpec<Lik>& model, const ChainConfig& config, int chain_index) {
  if (config.iterations < 0 || config.burnin < 0 || config.burnin > config.iterations) {
    throw ConfigError("run_chain: need 0 <= burnin <= iterations");
  }
  Rng rng = make_substream(config.seed, static_cast<std::uint64_t>(chain_index));
  SplitSampler<Lik> sampler(model, config.proposal, config.sampler);

  Vector theta0 = model.theta_init;
  if (config.init_jitter > 0.0 && theta0.size() > 0) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      const Vector z = standard_normal_vector(rng, theta0.size());
      Vector candidate = model.theta_positive
                             ? Vector(model.theta_init.array() * (config.init_jitter * z.array()).exp())
                             : Vector(model.theta_init + config.init_jitter * z);
      if (sampler.admissible(candidate)) {
        theta0 = candidate;
        break;
      }
    }
  }
  SplitState state = sampler.initialize(theta0, model.eta_init, rng);

  ChainResult result;
  result.trace.names = recorded_names(model, config.record);
  result.trace.chain = chain_index;
  result.trace.seed = config.seed;
  result.trace.fingerprint = config.fingerprint;
  const long rows = config.iterations - config.burnin;
  result.trace.values.resize(rows, static_cast<Eigen::Index>(result.trace.names.size()));
  result.trace.iterations.reserve(static_cast<std::size_t>(rows));

  for (long k = 1; k <= config.iterations; ++k) {
    sampler.step(state, rng);
    if (k <= config.burnin) continue;
    const Eigen::Index row = k - config.burnin - 1;
    Eigen::Index col = 0;
    auto put = [&](const Vector& v) {
      result.trace.values.row(row).segment(col, v.size()) = v.transpose();
      col += v.size();
    };
    if (config.record.eta) put(state.eta);
    if (config.record.nu) put(state.nu);
    if (config.record.theta) put(state.theta);
    result.trace.iterations.push_back(k);
  }
  result.final_state = std::move(state);
  result.stats = sampler.stats();
  return result;
}

/// Runs chains 0..n_chains-1 on up to `threads` worker threads. Each chain owns
/// its random stream, so results do not depend on the thread count.
template <PartitionedLikelihood Lik>
std::vector<ChainResult> run_chains(const ModelSpec<Lik>& model, const ChainConfig& config,
                                    int n_chains, int threads = 1) {
  if (n_chains < 1) throw ConfigError("run_chains: need at least one chain");
  std::vector<std::optional<ChainResult>> slots(static_cast<std::size_t>(n_chains));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int c = next++; c < n_chains; c = next++) {
      try {
        slots[static_cast<std::size_t>(c)] = run_chain(model, config, c);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, n_chains);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<ChainResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace lgm
