#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "lgmsplit/gaussian_likelihood.hpp"
#include "lgmsplit/gev.hpp"
#include "oracles.hpp"

using namespace lgm;

namespace {

using Obs = std::vector<std::vector<double>>;

template <class F>
SmallVector central_gradient(F&& f, const SmallVector& x, double h) {
  SmallVector g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    SmallVector xp = x;
    SmallVector xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

std::vector<double> gev_sample(const GevParams& p, int n, Rng& rng) {
  std::vector<double> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = gev_quantile(uniform01(rng), p);
  return y;
}

SmallVector vec(std::initializer_list<double> v) {
  SmallVector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

}  // namespace

TEST_CASE("gaussian likelihood at a standard normal mean", "[likelihood][gaussian]") {
  GaussianLikelihood lik(Obs{{0.0}});
  const SmallVector x = vec({0.0, 0.0});
  CHECK(lik.log_lik(0, x) == Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(std::abs(lik.log_lik(0, x) + 0.918939) < 1e-6);
  const SmallVector g = lik.gradient(0, x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == -0.5);
}

TEST_CASE("gaussian gradient and Hessian against finite differences", "[likelihood][gaussian]") {
  Rng rng = make_substream(41, 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> y(1 + trial % 7);
    for (auto& v : y) v = 2.0 * standard_normal(rng);
    GaussianLikelihood lik({y});
    const SmallVector x = vec({standard_normal(rng), 0.5 * standard_normal(rng)});
    const SmallVector fd = central_gradient([&](const SmallVector& v) { return lik.log_lik(0, v); }, x, 1e-6);
    CHECK((lik.gradient(0, x) - fd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    SmallMatrix hfd(2, 2);
    for (int j = 0; j < 2; ++j) {
      SmallVector xp = x;
      SmallVector xm = x;
      xp[j] += 1e-6;
      xm[j] -= 1e-6;
      hfd.col(j) = (lik.gradient(0, xp) - lik.gradient(0, xm)) / 2e-6;
    }
    const SmallMatrix h = lik.hessian(0, x);
    CHECK((h - hfd).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, hfd.cwiseAbs().maxCoeff()));
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gaussian known-variance mode is flat in tau", "[likelihood][gaussian]") {
  GaussianLikelihood lik(Obs{{1.0, 2.0}}, GaussianLikelihood::Mode::KnownVariance, 4.0);
  const double a = lik.log_lik(0, vec({0.5, 0.0}));
  const double b = lik.log_lik(0, vec({0.5, 3.0}));
  CHECK(a == b);
  CHECK(lik.gradient(0, vec({0.5, 3.0}))[1] == 0.0);
  const double expect = -std::log(2.0 * std::numbers::pi * 4.0) - (0.25 + 2.25) / 8.0;
  CHECK(a == Catch::Approx(expect).epsilon(1e-14));
  CHECK_THROWS_AS(GaussianLikelihood(Obs{{1.0}}, GaussianLikelihood::Mode::KnownVariance, 0.0), NonPositiveScale);
  CHECK_THROWS_AS(GaussianLikelihood(Obs{{1.0}, {}}), BadDimension);
}

TEST_CASE("GEV log density examples", "[likelihood][gev]") {
  CHECK(gev_log_density(1.0, {0.0, 0.0, 0.0}) == -1.0);
  // xi = 0.5, mu = 1, sigma = 1: support is y > -1
  CHECK(gev_log_density(-1.5, {0.0, 0.0, 0.5}) == kNegInf);
  CHECK(gev_log_density(-1.0, {0.0, 0.0, 0.5}) == kNegInf);
  GevLikelihood lik({{-1.5, 2.0}});
  CHECK(lik.log_lik(0, vec({0.0, 0.0, 0.5})) == kNegInf);
  CHECK_FALSE(lik.gradient(0, vec({0.0, 0.0, 0.5})).allFinite());
}

TEST_CASE("GEV density equals the derivative of the printed cdf", "[likelihood][gev]") {
  Rng rng = make_substream(42, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const GevParams p{0.5 * standard_normal(rng), 0.3 * standard_normal(rng), 0.2};
    const double y = gev_quantile(0.02 + 0.96 * uniform01(rng), p);
    const double dens = std::exp(gev_log_density(y, p));
    const double ref = oracle::gev_density_from_cdf(y, std::exp(p.lambda), std::exp(p.tau), p.xi);
    CHECK(std::abs(dens - ref) < 1e-6);
    CHECK(gev_cdf(y, p) == Catch::Approx(oracle::gev_cdf_printed(y, std::exp(p.lambda), std::exp(p.tau), p.xi)).epsilon(1e-12));
  }
  for (double xi : {-0.3, -1e-4, 0.0, 1e-4, 0.4}) {
    const GevParams p{0.2, -0.1, xi};
    for (double u : {0.05, 0.3, 0.7, 0.95}) {
      const double y = gev_quantile(u, p);
      CHECK(gev_cdf(y, p) == Catch::Approx(u).epsilon(1e-12));
      CHECK(std::abs(std::exp(gev_log_density(y, p)) -
                     oracle::gev_density_from_cdf(y, std::exp(p.lambda), std::exp(p.tau), xi)) < 1e-6);
    }
  }
}

TEST_CASE("GEV gradient against central differences", "[likelihood][gev]") {
  Rng rng = make_substream(43, 0);
  int checked = 0;
  while (checked < 100) {
    const GevParams truth{0.3 * standard_normal(rng), 0.3 * standard_normal(rng), 0.3 * standard_normal(rng)};
    GevLikelihood lik({gev_sample(truth, 12, rng)});
    const SmallVector x = vec({truth.lambda + 0.05 * standard_normal(rng), truth.tau + 0.05 * standard_normal(rng),
                               truth.xi + 0.05 * standard_normal(rng)});
    if (!std::isfinite(lik.log_lik(0, x))) continue;
    const auto f = [&](const SmallVector& v) { return lik.log_lik(0, v); };
    bool inside = true;
    for (int j = 0; j < 3 && inside; ++j) {
      for (double s : {-1e-5, 1e-5}) {
        SmallVector v = x;
        v[j] += s;
        inside = inside && std::isfinite(f(v));
      }
    }
    if (!inside) continue;
    const SmallVector fd = central_gradient(f, x, 1e-6);
    CHECK((lik.gradient(0, x) - fd).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    const SmallMatrix h = lik.hessian(0, x);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-8);
    ++checked;
  }
}

TEST_CASE("GEV gradient is smooth through xi = 0", "[likelihood][gev]") {
  Rng rng = make_substream(44, 0);
  GevLikelihood lik({gev_sample({0.1, -0.2, 0.0}, 30, rng)});
  for (double xi : {-2e-3, -1e-3, -1e-7, 0.0, 1e-7, 1e-3, 2e-3}) {
    const SmallVector x = vec({0.1, -0.2, xi});
    const SmallVector fd = central_gradient([&](const SmallVector& v) { return lik.log_lik(0, v); }, x, 1e-6);
    CHECK((lik.gradient(0, x) - fd).cwiseAbs().maxCoeff() < 1e-5 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("Gumbel continuity", "[likelihood][gev]") {
  Rng rng = make_substream(45, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const double lambda = 0.5 * standard_normal(rng);
    const double tau = 0.5 * standard_normal(rng);
    const double y = gev_quantile(0.01 + 0.98 * uniform01(rng), {lambda, tau, 0.0});
    const double z = (y - std::exp(lambda)) * std::exp(-tau);
    const double gumbel = -tau - z - std::exp(-z);
    CHECK(std::abs(gev_log_density(y, {lambda, tau, 0.0}) - gumbel) < 1e-12 * std::max(1.0, std::abs(gumbel)));
    CHECK(std::abs(gev_log_density(y, {lambda, tau, 1e-7}) - gumbel) < 1e-6);
    CHECK(std::abs(gev_log_density(y, {lambda, tau, -1e-7}) - gumbel) < 1e-6);
  }
}

TEST_CASE("GEV maximum likelihood consistency", "[likelihood][gev][mle]") {
  Rng rng = make_substream(46, 0);
  const GevFit fit = gev_mle(gev_sample({0.0, 0.0, 0.1}, 10000, rng));
  CHECK(std::abs(fit.params.lambda) < 0.05);
  CHECK(std::abs(fit.params.tau) < 0.05);
  CHECK(std::abs(fit.params.xi - 0.1) < 0.05);

  const std::vector<double> gumbel = gev_sample({0.5, -0.3, 0.0}, 10000, rng);
  const GevFit g = gev_mle(gumbel);
  CHECK(std::abs(g.params.xi) < 0.05);

  // the mle is a stationary point: compare with a derivative-free search
  const std::vector<double> small = gev_sample({0.2, -0.5, 0.15}, 60, rng);
  const GevFit s = gev_mle(small);
  Vector x0(3);
  x0 << s.params.lambda + 0.05, s.params.tau - 0.05, s.params.xi + 0.03;
  const Vector nm = oracle::nelder_mead_max(
      [&](const Vector& v) { return gev_loglik(small, {v[0], v[1], v[2]}); }, x0, 0.05);
  CHECK(std::abs(nm[0] - s.params.lambda) < 1e-4);
  CHECK(std::abs(nm[1] - s.params.tau) < 1e-4);
  CHECK(std::abs(nm[2] - s.params.xi) < 1e-4);
}

TEST_CASE("GEV maximum likelihood on degenerate data", "[likelihood][gev][mle]") {
  CHECK_THROWS_AS(gev_mle(std::vector<double>(30, 2.5), 7), NonConvergence);
  try {
    gev_mle(std::vector<double>(30, 2.5), 7);
  } catch (const NonConvergence& e) {
    CHECK(e.partition() == 7);
  }
  CHECK_THROWS_AS(gev_mle(std::vector<double>{1.0}), NonConvergence);
}

TEST_CASE("per-partition MLE layout", "[likelihood][gev][mle]") {
  Rng rng = make_substream(47, 0);
  const GevParams a{0.1, -0.2, 0.05};
  const GevParams b{0.6, 0.1, -0.1};
  GevLikelihood lik({gev_sample(a, 400, rng), gev_sample(b, 400, rng)});
  const Vector eta = gev_mle_per_partition(lik);
  REQUIRE(eta.size() == 6);
  CHECK(eta[0] == gev_mle(lik.observations(0)).params.lambda);
  CHECK(eta[3] == gev_mle(lik.observations(1)).params.tau);
  CHECK(eta[5] == gev_mle(lik.observations(1)).params.xi);
}

TEST_CASE("partition additivity", "[likelihood]") {
  Rng rng = make_substream(48, 0);
  std::vector<std::vector<double>> obs;
  for (int r = 0; r < 5; ++r) obs.push_back(gev_sample({0.3, -0.3, 0.1}, 8, rng));
  GevLikelihood lik(obs);
  Vector eta(15);
  for (int r = 0; r < 5; ++r) {
    eta[r] = 0.3;
    eta[5 + r] = -0.3 + 0.01 * r;
    eta[10 + r] = 0.1;
  }
  double sum = 0.0;
  for (int r = 0; r < 5; ++r) sum += lik.log_lik(r, vec({eta[r], eta[5 + r], eta[10 + r]}));
  CHECK(total_log_lik(lik, eta) == sum);

  GaussianLikelihood glik({{1.0, 2.0}, {0.5}, {-1.0, 0.0, 3.0}});
  Vector e2(6);
  e2 << 0.1, 0.2, 0.3, -0.1, 0.0, 0.4;
  double s2 = 0.0;
  for (int i = 0; i < 3; ++i) s2 += glik.log_lik(i, vec({e2[i], e2[3 + i]}));
  CHECK(total_log_lik(glik, e2) == s2);
  CHECK_THROWS_AS(total_log_lik(glik, Vector::Zero(5)), DimensionMismatch);
}

TEST_CASE("partition layout validation", "[likelihood]") {
  CHECK_NOTHROW(PartitionLayout(4, {{0, 2}, {1, 3}}));
  CHECK_THROWS_AS(PartitionLayout(4, {{0, 2}, {2, 3}}), BadDimension);
  CHECK_THROWS_AS(PartitionLayout(4, {{0, 2}, {3}}), BadDimension);
  CHECK_THROWS_AS(PartitionLayout(4, {{0, 2, 1, 3, 4}}), BadDimension);
  CHECK_THROWS_AS(PartitionLayout(2, {{0, 5}}), BadDimension);
  const PartitionLayout l = PartitionLayout::interleaved(3, 3);
  CHECK(l.indices(1) == std::vector<int>{1, 4, 7});
  Vector eta = Vector::LinSpaced(9, 0.0, 8.0);
  const SmallVector g = l.gather(eta, 2);
  CHECK(g[0] == 2.0);
  CHECK(g[2] == 8.0);
  Vector out = Vector::Zero(9);
  l.scatter(g, 2, out);
  CHECK(out[5] == 5.0);
}
