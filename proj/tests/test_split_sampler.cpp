#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "instances.hpp"
#include "lgmsplit/lgmsplit.hpp"
#include "oracles.hpp"

using namespace lgm;

namespace {

using Obs = std::vector<std::vector<double>>;

Obs gaussian_obs(int sites, int per_site, Rng& rng) {
  Obs y(static_cast<std::size_t>(sites));
  for (auto& v : y) {
    for (int t = 0; t < per_site; ++t) v.push_back(1.0 + standard_normal(rng));
  }
  return y;
}

SmallVector objective_gradient(const auto& lik, const Vector& q, const Vector& c, const Vector& eta, int i) {
  const PartitionLayout& l = lik.layout();
  const SmallVector x = l.gather(eta, i);
  return lik.gradient(i, x) - l.gather(q, i).cwiseProduct(x) + l.gather(c, i);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

TEST_CASE("mode of a quadratic objective", "[sampler][mode]") {
  Rng rng = make_substream(51, 0);
  GaussianLikelihood lik(gaussian_obs(6, 5, rng), GaussianLikelihood::Mode::KnownVariance, 0.7);
  const Vector q = (1.0 + standard_normal_vector(rng, 12).array().abs()).matrix();
  const Vector c = standard_normal_vector(rng, 12);
  const GaussianApproximation ga = find_mode(lik, q, c, Vector::Zero(12));
  for (int i = 0; i < 6; ++i) CHECK(objective_gradient(lik, q, c, ga.mode, i).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(ga.failures() == 0);
}

TEST_CASE("mode of the mean/log-variance likelihood", "[sampler][mode]") {
  // one site, one observation, nu = 0
  const double y = 1.7;
  GaussianLikelihood lik(Obs{{y}});
  Vector q(2);
  q << 0.9, 2.0;
  const GaussianApproximation ga = find_mode(lik, q, Vector::Zero(2), Vector::Zero(2));
  const double mu = ga.mode[0];
  const double tau = ga.mode[1];
  CHECK(std::abs(std::exp(-tau) * (y - mu) - q[0] * mu) < 1e-8);

  Rng rng = make_substream(52, 0);
  GaussianLikelihood many(gaussian_obs(10, 4, rng));
  const Vector q2 = Vector::Constant(20, 1.5);
  const Vector c2 = 0.3 * standard_normal_vector(rng, 20);
  const GaussianApproximation g2 = find_mode(many, q2, c2, Vector::Zero(20));
  for (int i = 0; i < 10; ++i) CHECK(objective_gradient(many, q2, c2, g2.mode, i).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("GEV mode matches a derivative-free optimizer", "[sampler][mode][gev]") {
  Rng rng = make_substream(53, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const GevParams p{0.4 * standard_normal(rng), 0.3 * standard_normal(rng), 0.1 * standard_normal(rng)};
    std::vector<double> y;
    for (int t = 0; t < 40; ++t) y.push_back(gev_quantile(uniform01(rng), p));
    GevLikelihood lik({y});
    Vector q(3);
    q << 4.0, 6.0, 50.0;
    Vector centre(3);
    centre << p.lambda, p.tau, p.xi;
    const Vector c = q.cwiseProduct(centre + 0.1 * standard_normal_vector(rng, 3));
    const GaussianApproximation ga = find_mode(lik, q, c, centre);
    REQUIRE(ga.failures() == 0);
    const auto objective = [&](const Vector& x) {
      return gev_loglik(y, {x[0], x[1], x[2]}) - 0.5 * x.cwiseProduct(q).dot(x) + c.dot(x);
    };
    const Vector nm = oracle::nelder_mead_max(objective, centre, 0.05);
    CHECK((ga.mode - nm).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("data-rich ratio vanishes for a quadratic likelihood", "[sampler][data-rich]") {
  Rng rng = make_substream(54, 0);
  GaussianLikelihood lik(gaussian_obs(8, 3, rng), GaussianLikelihood::Mode::KnownVariance, 1.3);
  const Vector q = (0.5 + standard_normal_vector(rng, 16).array().abs()).matrix();
  for (int trial = 0; trial < 200; ++trial) {
    const Vector c = standard_normal_vector(rng, 16);
    const Vector eta_k = 3.0 * standard_normal_vector(rng, 16);
    const GaussianApproximation ga = find_mode(lik, q, c, eta_k);
    const DataRichStep step = sample_data_rich(lik, ga, eta_k, rng, trial % 2 == 0);
    for (double r : step.log_ratio) CHECK(std::abs(r) < 1e-10);
    CHECK(step.accepted_count == step.proposed_count);
  }
}

TEST_CASE("data-rich ratio is zero for an identity move", "[sampler][data-rich]") {
  Rng rng = make_substream(55, 0);
  GaussianLikelihood lik(gaussian_obs(3, 4, rng));
  const GaussianApproximation ga = find_mode(lik, Vector::Ones(6), Vector::Zero(6), Vector::Zero(6));
  for (int i = 0; i < 3; ++i) {
    const SmallVector x = lik.layout().gather(standard_normal_vector(rng, 6), i);
    CHECK(data_rich_log_ratio(lik, ga, i, x, x) == 0.0);
  }
}

TEST_CASE("data-rich ratio equals the four-density ratio", "[sampler][data-rich][gev]") {
  Rng rng = make_substream(56, 0);
  for (int trial = 0; trial < 100; ++trial) CHECK(instance::data_rich_discrepancy(rng) < 1e-8);
}

TEST_CASE("proposal precision is block diagonal over partitions", "[sampler][data-rich]") {
  Rng rng = make_substream(57, 0);
  GaussianLikelihood lik(gaussian_obs(5, 3, rng));
  const GaussianApproximation ga = find_mode(lik, Vector::Constant(10, 2.0), Vector::Zero(10), Vector::Zero(10));
  const DenseMatrix p = ga.precision.to_dense();
  for (int a = 0; a < 10; ++a) {
    for (int b = 0; b < 10; ++b) {
      if (a % 5 != b % 5) CHECK(p(a, b) == 0.0);
    }
  }
  CHECK(p(0, 5) != 0.0);
  const DenseMatrix h = DenseMatrix(ga.hessian_matrix(lik.layout()));
  CHECK((p + h - DenseMatrix(Vector::Constant(10, 2.0).asDiagonal())).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("data-rich acceptance is per partition", "[sampler][data-rich][gev]") {
  Rng rng = make_substream(58, 0);
  std::vector<std::vector<double>> obs;
  for (int r = 0; r < 6; ++r) {
    obs.emplace_back();
    for (int t = 0; t < 3; ++t) obs.back().push_back(gev_quantile(uniform01(rng), {0.0, 0.0, 0.1}));
  }
  GevLikelihood lik(obs);
  const Vector q = Vector::Constant(18, 2.0);
  const Vector eta_k = Vector::Zero(18);
  const GaussianApproximation ga = find_mode(lik, q, Vector::Zero(18), eta_k);
  int mixed = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const DataRichStep s = sample_data_rich(lik, ga, eta_k, rng, true);
    for (int i = 0; i < 6; ++i) {
      const bool moved = s.eta[i] != 0.0 || s.eta[6 + i] != 0.0 || s.eta[12 + i] != 0.0;
      CHECK(moved == static_cast<bool>(s.accepted[static_cast<std::size_t>(i)]));
    }
    if (s.accepted_count > 0 && s.accepted_count < 6) ++mixed;
    const DataRichStep whole = sample_data_rich(lik, ga, eta_k, rng, false);
    CHECK((whole.accepted_count == 0 || whole.accepted_count == 1));
    CHECK(whole.proposed_count == 1);
  }
  CHECK(mixed > 0);
}

TEST_CASE("theta ratio examples", "[sampler][data-poor]") {
  Rng rng = make_substream(59, 0);
  const instance::RandomLatent inst = instance::random_latent(6, 4, rng);
  const Vector th = standard_normal_vector(rng, 3);
  const Vector eta = standard_normal_vector(rng, 6);
  CHECK(log_theta_posterior_ratio(inst.structure, th, th, eta, instance::normal_log_prior) == 0.0);

  // decoupled: Z = 0
  const Vector w = inst.w;
  const DenseMatrix r = inst.r;
  const LatentStructure s0(SparseMatrix(6, 4), [w](const Vector& t) { return Vector(w * std::exp(t[0])); },
                           [r](const Vector& t) { return SparseSpdMatrix::from_dense(r).scaled(std::exp(t[1])); },
                           inst.mu);
  Vector a(2), b(2);
  a << 0.3, -0.5;
  b << -0.2, 0.9;
  const double got = log_theta_posterior_ratio(s0, a, b, eta, instance::normal_log_prior);
  const Vector qa = w * std::exp(a[0]);
  const Vector qb = w * std::exp(b[0]);
  const double expect = instance::normal_log_prior(a) - instance::normal_log_prior(b) +
                        0.5 * (qa.array().log().sum() - qb.array().log().sum()) -
                        0.5 * eta.dot((qa - qb).cwiseProduct(eta));
  CHECK(std::abs(got - expect) < 1e-10);
}

TEST_CASE("theta ratio equals the dense marginal-likelihood ratio", "[sampler][data-poor]") {
  Rng rng = make_substream(60, 0);
  for (int trial = 0; trial < 100; ++trial) CHECK(instance::theta_ratio_discrepancy(rng) < 1e-8);
}

TEST_CASE("data-poor acceptance does not depend on nu", "[sampler][data-poor]") {
  Rng rng = make_substream(61, 0);
  const instance::RandomLatent inst = instance::random_latent(8, 5, rng);
  const HyperProposal proposal = GaussianRandomWalk(-DenseMatrix::Identity(3, 3), 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    SplitState s1{standard_normal_vector(rng, 8), standard_normal_vector(rng, 5), 0.3 * standard_normal_vector(rng, 3), 0};
    SplitState s2 = s1;
    s2.nu = 10.0 * standard_normal_vector(rng, 5);
    ThetaEvaluator ev1(inst.structure, instance::normal_log_prior);
    ThetaEvaluator ev2(inst.structure, instance::normal_log_prior);
    ThetaTerms t1 = ev1.terms(s1.theta);
    ThetaTerms t2 = ev2.terms(s2.theta);
    Rng r1 = make_substream(1000 + trial, 0);
    Rng r2 = r1;
    const DataPoorStep p1 = sample_data_poor(ev1, t1, s1, proposal, r1);
    const DataPoorStep p2 = sample_data_poor(ev2, t2, s2, proposal, r2);
    CHECK(same_bits(p1.log_ratio, p2.log_ratio));
    CHECK(p1.accepted == p2.accepted);
    CHECK(bitwise_equal(s1.theta, s2.theta));
    if (p1.accepted) CHECK(bitwise_equal(s1.nu, s2.nu));
  }
}

TEST_CASE("forced identical theta always accepts and refreshes nu", "[sampler][data-poor]") {
  const instance::Conjugate cj = instance::conjugate_model();
  ThetaEvaluator ev(cj.model.structure, {});
  ThetaTerms t = ev.terms(Vector());
  Rng rng = make_substream(62, 0);
  SplitState s{Vector::Zero(4), Vector::Constant(3, 99.0), Vector(), 0};
  const DataPoorStep p = sample_data_poor(ev, t, s, MultiplicativeProposal(2.0), rng);
  CHECK(p.accepted);
  CHECK(p.log_ratio == 0.0);
  CHECK(s.nu.cwiseAbs().maxCoeff() < 20.0);
}

TEST_CASE("conjugate model: nu draws match the closed-form posterior", "[sampler][conjugate]") {
  const instance::Conjugate cj = instance::conjugate_model();
  const instance::ConjugateCheck c = instance::check_conjugate(cj, 20000, 63);
  CHECK(c.draws == 20000);
  CHECK(c.worst_mean_z < 3.0);
  CHECK(c.worst_var_z < 3.0);
}

TEST_CASE("stationary distribution of eta on a two-partition toy", "[sampler][conjugate]") {
  const instance::Conjugate cj = instance::conjugate_model();
  ChainConfig cc;
  cc.iterations = 300000;
  cc.burnin = 0;
  cc.seed = 64;
  cc.proposal = MultiplicativeProposal(2.0);
  cc.record = {true, false, false};
  const ChainResult r = run_chain(cj.model, cc, 0);
  // thin by 3 to 10^5 draws
  for (int j = 0; j < 4; ++j) {
    std::vector<double> x;
    for (Eigen::Index k = 2; k < r.trace.length(); k += 3) x.push_back(r.trace.values(k, j));
    REQUIRE(x.size() == 100000);
    CHECK(oracle::ks_normal(x, cj.post_mean[j], std::sqrt(cj.post_cov(j, j))) < 0.02);
  }
  CHECK(r.stats.data_rich_rate() == 1.0);
}

TEST_CASE("chains are deterministic and thread-count independent", "[sampler][chain]") {
  Rng rng = make_substream(65, 0);
  const instance::RandomLatent inst = instance::random_latent(8, 5, rng, false);
  GaussianLikelihood lik(gaussian_obs(4, 6, rng));
  ModelSpec<GaussianLikelihood> model{inst.structure, lik, instance::normal_log_prior, Vector::Zero(3),
                                      Vector::Zero(8), false, {}, {}, {}};
  ChainConfig cc;
  cc.iterations = 300;
  cc.burnin = 100;
  cc.seed = 9;
  cc.proposal = GaussianRandomWalk(-10.0 * DenseMatrix::Identity(3, 3), 1.0);
  cc.record = {true, true, true};
  const auto a = run_chains(model, cc, 3, 1);
  const auto b = run_chains(model, cc, 3, 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(a[c].trace.length() == 200);
    CHECK(a[c].trace.iterations.front() == 101);
    CHECK(std::memcmp(a[c].trace.values.data(), b[c].trace.values.data(),
                      sizeof(double) * static_cast<std::size_t>(a[c].trace.values.size())) == 0);
    CHECK_NOTHROW(a[c].trace.validate());
  }
  CHECK((a[0].trace.values - a[1].trace.values).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a[0].trace.names.size() == 8 + 5 + 3);
}

TEST_CASE("zero iterations give an empty trace", "[sampler][chain]") {
  const instance::Conjugate cj = instance::conjugate_model();
  ChainConfig cc;
  cc.iterations = 0;
  cc.burnin = 0;
  cc.proposal = MultiplicativeProposal(2.0);
  const ChainResult r = run_chain(cj.model, cc, 0);
  CHECK(r.trace.length() == 0);
  CHECK(r.final_state.iteration == 0);
  CHECK(r.final_state.eta == cj.model.eta_init);
  cc.burnin = 1;
  CHECK_THROWS_AS(run_chain(cj.model, cc, 0), ConfigError);
}

TEST_CASE("multiplicative proposal law", "[sampler][proposal]") {
  const MultiplicativeProposal m(2.0);
  CHECK(m.normalizer() == Catch::Approx(2.0 - 0.5 + 2.0 * std::log(2.0)).epsilon(1e-15));
  for (double u : {1e-9, 0.01, 0.3, 0.5, 0.77, 0.999999}) CHECK(std::abs(m.cdf(m.quantile(u)) - u) < 1e-12);
  Rng rng = make_substream(66, 0);
  const int bins = 10;
  std::vector<long> counts(bins, 0);
  const long n = 1000000;
  for (long k = 0; k < n; ++k) {
    const double f = m.draw_factor(rng);
    REQUIRE(f >= 0.5);
    REQUIRE(f <= 2.0);
    ++counts[std::min(bins - 1, static_cast<int>((f - 0.5) / 1.5 * bins))];
  }
  for (int b = 0; b < bins; ++b) {
    const double lo = 0.5 + 1.5 * b / bins;
    const double hi = 0.5 + 1.5 * (b + 1) / bins;
    // exact bin mass from the antiderivative f + log f
    const double mass = (hi - lo + std::log(hi / lo)) / (1.5 + 2.0 * std::log(2.0));
    CHECK(std::abs(static_cast<double>(counts[b]) / n - mass) / mass < 0.01);
  }
  CHECK_THROWS_AS(MultiplicativeProposal(1.0), ConfigError);

  Vector theta(3);
  theta << 1.0, 2.0, 0.5;
  for (int k = 0; k < 1000; ++k) {
    const ThetaProposal p = propose_theta(MultiplicativeProposal(2.0), theta, rng);
    CHECK(p.log_q_correction == 0.0);
    for (int i = 0; i < 3; ++i) {
      CHECK(p.theta[i] / theta[i] >= 0.5);
      CHECK(p.theta[i] / theta[i] <= 2.0);
    }
  }
}

TEST_CASE("random-walk proposal increments", "[sampler][proposal]") {
  Rng rng = make_substream(67, 0);
  const GaussianRandomWalk rw(-DenseMatrix::Identity(2, 2), 1.0);
  std::vector<double> x0, x1;
  const Vector theta = Vector::Constant(2, 3.0);
  for (int k = 0; k < 100000; ++k) {
    const Vector d = propose_theta(rw, theta, rng).theta - theta;
    x0.push_back(d[0]);
    x1.push_back(d[1]);
  }
  CHECK(oracle::ks_normal(x0, 0.0, 1.0) < 0.01);
  CHECK(oracle::ks_normal(x1, 0.0, 1.0) < 0.01);

  DenseMatrix h(2, 2);
  h << -4.0, 1.0, 1.0, -2.0;
  const GaussianRandomWalk rw2(h, 0.5);
  DenseMatrix cov = DenseMatrix::Zero(2, 2);
  for (int k = 0; k < 200000; ++k) {
    const Vector d = rw2.increment(rng);
    cov += d * d.transpose();
  }
  cov /= 200000.0;
  const DenseMatrix expect = (-0.5 * h).inverse();
  CHECK((cov - expect).cwiseAbs().maxCoeff() < 0.02 * expect.cwiseAbs().maxCoeff());

  DenseMatrix bad(2, 2);
  bad << -1.0, 0.0, 0.0, 0.5;
  CHECK_THROWS_AS(GaussianRandomWalk(bad, 1.0), HessianNotNegativeDefinite);
  CHECK(default_rw_scale(4) == Catch::Approx(2.38 * 2.38 / 4.0));
}

TEST_CASE("finite-difference Hessian for the theta proposal", "[sampler][hessian]") {
  // Z = 0, Q_eps = e^theta I_n: log pi(theta | eta) = n/2 theta - 1/2 e^theta S + log prior
  Rng rng = make_substream(68, 0);
  const int n = 30;
  const Vector eta = 0.7 * standard_normal_vector(rng, n);
  const double s = eta.squaredNorm();
  LatentStructure st(SparseMatrix(n, 1), [n](const Vector& t) { return Vector(Vector::Constant(n, std::exp(t[0]))); },
                     [](const Vector&) { return SparseSpdMatrix::identity(1); }, Vector::Zero(1));
  const double prior_var = 100.0;
  LogPriorFn prior = [prior_var](const Vector& t) { return -0.5 * t[0] * t[0] / prior_var; };
  GaussianLikelihood lik(gaussian_obs(n / 2, 1, rng));
  ModelSpec<GaussianLikelihood> model{st, lik, prior, Vector::Zero(1), eta, false, {}, {}, {}};
  const ThetaMode mode = hessian_for_theta_proposal(model, eta, Vector::Zero(1));
  const double t0 = mode.theta0[0];
  CHECK(std::abs(0.5 * n - 0.5 * std::exp(t0) * s - t0 / prior_var) < 1e-4);
  const double analytic = -0.5 * std::exp(t0) * s - 1.0 / prior_var;
  CHECK(std::abs(mode.hessian(0, 0) - analytic) < 0.01 * std::abs(analytic));

  const ObjectiveFn f = [](const Vector& x) {
    return -std::pow(x[0] - 1.0, 2) - 2.0 * std::pow(x[1] + 0.5, 2) + 0.3 * std::sin(x[0] * x[1]) - std::pow(x[0], 4) * 0.01;
  };
  const DenseMatrix h = finite_difference_hessian(f, Vector::Constant(2, 0.4), 1e-4);
  CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-6);
  const ThetaMode m2 = maximize_with_hessian(f, Vector::Zero(2));
  CHECK(finite_difference_gradient(f, m2.theta0, 1e-4).cwiseAbs().maxCoeff() < 1e-5);

  const ObjectiveFn flat = [](const Vector& x) { return -x[0] * x[0]; };
  CHECK_THROWS_AS(maximize_with_hessian(flat, Vector::Constant(2, 0.3)), HessianNotNegativeDefinite);
}

TEST_CASE("multiplicative proposal needs positive hyperparameters", "[sampler][proposal]") {
  Rng rng = make_substream(69, 0);
  const instance::RandomLatent inst = instance::random_latent(4, 3, rng);
  GaussianLikelihood lik(gaussian_obs(2, 3, rng));
  ModelSpec<GaussianLikelihood> model{inst.structure, lik, {}, Vector::Zero(3), Vector::Zero(4), false, {}, {}, {}};
  CHECK_THROWS_AS(SplitSampler<GaussianLikelihood>(model, MultiplicativeProposal(2.0)), ConfigError);
  model.theta_positive = true;
  model.theta_init = Vector::Ones(3);
  CHECK_NOTHROW(SplitSampler<GaussianLikelihood>(model, MultiplicativeProposal(2.0)));
}

TEST_CASE("random-walk acceptance on a small GEV scenario", "[sampler][gev][slow]") {
  GevScenario sc;
  sc.rivers = 1;
  sc.years = 60;
  Rng rng = make_substream(70, 0xda7a);
  const GevDataset d = simulate_gev_data(sc, rng);
  ModelSpec<GevLikelihood> model = build_gev_model(sc, d);
  const ThetaMode mode = hessian_for_theta_proposal(model, model.eta_init, model.theta_init);
  model.theta_init = mode.theta0;
  ChainConfig cc;
  cc.iterations = 1500;
  cc.burnin = 300;
  cc.seed = 71;
  cc.proposal = GaussianRandomWalk(mode.hessian, default_rw_scale(model.n_theta()));
  const ChainResult r = run_chain(model, cc, 0);
  INFO("data-poor acceptance " << r.stats.data_poor_rate());
  CHECK(r.stats.data_poor_rate() > 0.1);
  CHECK(r.stats.data_poor_rate() < 0.6);
  CHECK(r.stats.mode_failures == 0);
}
