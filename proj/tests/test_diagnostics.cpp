#include <catch_amalgamated.hpp>

#include <cmath>

#include "lgmsplit/diagnostics.hpp"
#include "lgmsplit/random.hpp"

using namespace lgm;

namespace {

ChainTrace make_trace(const DenseMatrix& values, int chain = 0) {
  ChainTrace t;
  for (Eigen::Index j = 0; j < values.cols(); ++j) t.names.push_back("p" + std::to_string(j));
  for (Eigen::Index k = 0; k < values.rows(); ++k) t.iterations.push_back(k + 1);
  t.values = values;
  t.chain = chain;
  return t;
}

std::vector<ChainTrace> iid_traces(int chains, int n, int params, std::uint64_t seed) {
  std::vector<ChainTrace> out;
  for (int c = 0; c < chains; ++c) {
    Rng rng = make_substream(seed, static_cast<std::uint64_t>(c));
    DenseMatrix v(n, params);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < params; ++j) v(k, j) = standard_normal(rng);
    out.push_back(make_trace(v, c));
  }
  return out;
}

Vector ar1(int n, double phi, Rng& rng) {
  Vector x(n);
  x[0] = standard_normal(rng) / std::sqrt(1.0 - phi * phi);
  for (int k = 1; k < n; ++k) x[k] = phi * x[k - 1] + standard_normal(rng);
  return x;
}

}  // namespace

TEST_CASE("Gelman-Rubin on iid chains", "[diagnostics][gr]") {
  const auto traces = iid_traces(4, 10000, 3, 81);
  const auto gr = gelman_rubin(traces);
  REQUIRE(gr.size() == 3);
  for (const auto& s : gr) {
    CHECK(s.cut_points.size() == 20);
    CHECK(s.cut_points.back() == 10000);
    CHECK(s.values.back() >= 0.99);
    CHECK(s.values.back() <= 1.01);
  }
}

TEST_CASE("Gelman-Rubin detects separated chains", "[diagnostics][gr]") {
  auto traces = iid_traces(2, 1000, 1, 82);
  traces[1].values.array() += 10.0;
  const double r = psrf(traces, 0, 1000);
  CHECK(r > 1.5);
  // B = n * 50, W ~ 1: sqrt(((n - 1) / n + 50) / 1) ~ 7.1
  CHECK(r == Catch::Approx(std::sqrt(51.0)).epsilon(0.05));
}

TEST_CASE("Gelman-Rubin with zero within-chain variance", "[diagnostics][gr]") {
  std::vector<ChainTrace> traces{make_trace(DenseMatrix::Constant(50, 1, 1.0), 0),
                                 make_trace(DenseMatrix::Constant(50, 1, 2.0), 1)};
  CHECK_THROWS_AS(gelman_rubin(traces), DegenerateChains);
  const DiagnosticsReport rep = diagnose(traces, 5);
  CHECK(rep.gelman_rubin.empty());
  CHECK(rep.skipped == std::vector<std::string>{"p0"});
}

TEST_CASE("Gelman-Rubin of identical copies", "[diagnostics][gr]") {
  const auto one = iid_traces(1, 500, 2, 83);
  std::vector<ChainTrace> copies(4, one[0]);
  for (Eigen::Index n : {10, 137, 500}) {
    const double nn = static_cast<double>(n);
    CHECK(std::abs(psrf(copies, 0, n) - std::sqrt((nn - 1.0) / nn)) < 1e-14);
    CHECK(std::abs(psrf(copies, 1, n) - std::sqrt((nn - 1.0) / nn)) < 1e-14);
  }
}

TEST_CASE("Gelman-Rubin input validation", "[diagnostics][gr]") {
  const auto traces = iid_traces(2, 100, 1, 84);
  CHECK_THROWS_AS(gelman_rubin(std::span<const ChainTrace>(traces.data(), 1)), Error);
  auto shorter = traces;
  shorter[1] = make_trace(traces[1].values.topRows(50), 1);
  CHECK_THROWS_AS(gelman_rubin(shorter), DimensionMismatch);
  CHECK_THROWS_AS(gelman_rubin(traces, {5}), Error);
  CHECK_THROWS_AS(gelman_rubin(traces, {101}), Error);
  const auto small = iid_traces(2, 9, 1, 85);
  CHECK_THROWS_AS(gelman_rubin(small), Error);
}

TEST_CASE("default cut points", "[diagnostics]") {
  const auto c = default_cut_points(1000);
  REQUIRE(c.size() == 20);
  CHECK(c.front() == 50);
  CHECK(c[9] == 500);
  CHECK(c.back() == 1000);
  CHECK(default_cut_points(100).front() == 10);
  // cut points below 10 draws are dropped
  CHECK(default_cut_points(15) == std::vector<Eigen::Index>{10, 11, 12, 13, 14, 15});
}

TEST_CASE("autocorrelation basics", "[diagnostics][acf]") {
  Rng rng = make_substream(86, 0);
  const Vector x = standard_normal_vector(rng, 100000);
  const Vector rho = autocorrelation(x, 50);
  CHECK(rho.size() == 51);
  CHECK(rho[0] == 1.0);
  CHECK(rho.tail(50).cwiseAbs().maxCoeff() < 0.02);
  CHECK_THROWS_AS(autocorrelation(x.head(10), 10), Error);
}

TEST_CASE("autocorrelation of an AR(1) process", "[diagnostics][acf]") {
  Rng rng = make_substream(87, 0);
  const Vector x = ar1(100000, 0.5, rng);
  const Vector rho = autocorrelation(x, 10);
  for (int k = 0; k <= 10; ++k) CHECK(std::abs(rho[k] - std::pow(0.5, k)) < 0.02);
}

TEST_CASE("autocorrelation is shift and scale invariant", "[diagnostics][acf]") {
  Rng rng = make_substream(88, 0);
  const Vector x = ar1(5000, 0.8, rng);
  const Vector base = autocorrelation(x, 30);
  const Vector shifted = autocorrelation((x.array() + 123.25).matrix(), 30);
  const Vector scaled = autocorrelation((x * 3.7).eval(), 30);
  const Vector doubled = autocorrelation((x * 4.0).eval(), 30);
  CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((base - scaled).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(base == doubled);
}

TEST_CASE("diagnose reports every parameter", "[diagnostics]") {
  auto traces = iid_traces(3, 400, 2, 89);
  const DiagnosticsReport rep = diagnose(traces, 20);
  CHECK(rep.gelman_rubin.size() == 2);
  CHECK(rep.acf_parameters == std::vector<std::string>{"p0", "p1"});
  CHECK(rep.acf[1].size() == 21);
  const Vector expect = (autocorrelation(traces[0].values.col(1), 20) + autocorrelation(traces[1].values.col(1), 20) +
                         autocorrelation(traces[2].values.col(1), 20)) / 3.0;
  CHECK((rep.acf[1] - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(autocorrelation(traces[0], "p1", 20) == autocorrelation(traces[0].values.col(1), 20));
  CHECK_THROWS_AS(autocorrelation(traces[0], "missing", 20), Error);
}
