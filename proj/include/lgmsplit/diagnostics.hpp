#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lgmsplit/error.hpp"
#include "lgmsplit/trace.hpp"

namespace lgm {

/// Potential scale reduction sqrt(((n-1)/n W + B/n) / W) using the first n
/// draws of every chain for parameter column `col`.
inline double psrf(std::span<const ChainTrace> traces, int col, Eigen::Index n) {
  const auto m = static_cast<double>(traces.size());
  const auto nn = static_cast<double>(n);
  Vector means(static_cast<Eigen::Index>(traces.size()));
  double w = 0.0;
  for (std::size_t c = 0; c < traces.size(); ++c) {
    const auto x = traces[c].values.col(col).head(n);
    const double mean = x.mean();
    means[static_cast<Eigen::Index>(c)] = mean;
    w += (x.array() - mean).square().sum() / (nn - 1.0);
  }
  w /= m;
  const double grand = means.mean();
  const double b = nn * (means.array() - grand).square().sum() / (m - 1.0);
  if (!(w > 0.0)) throw DegenerateChains("zero within-chain variance for parameter column " + std::to_string(col));
  return std::sqrt(((nn - 1.0) / nn * w + b / nn) / w);
}

/// `count` evenly spaced prefix lengths ending at n, keeping only those >= 10.
inline std::vector<Eigen::Index> default_cut_points(Eigen::Index n, int count = 20) {
  std::vector<Eigen::Index> cuts;
  for (int k = 1; k <= count; ++k) {
    const Eigen::Index c = (n * k) / count;
    if (c >= 10 && (cuts.empty() || c > cuts.back())) cuts.push_back(c);
  }
  return cuts;
}

struct GelmanRubinSeries {
  std::string parameter;
  std::vector<Eigen::Index> cut_points;
  std::vector<double> values;
};

/// Gelman-Rubin statistic per parameter at each cut point.
inline std::vector<GelmanRubinSeries> gelman_rubin(std::span<const ChainTrace> traces,
                                                   std::vector<Eigen::Index> cut_points = {}) {
  if (traces.size() < 2) throw Error("gelman_rubin: need at least two chains");
  const Eigen::Index n = traces[0].length();
  for (const auto& t : traces) {
    if (t.length() != n) throw DimensionMismatch("gelman_rubin: traces differ in length");
    if (t.names != traces[0].names) throw DimensionMismatch("gelman_rubin: traces differ in parameters");
  }
  if (n < 10) throw Error("gelman_rubin: need at least 10 draws per chain");
  if (cut_points.empty()) cut_points = default_cut_points(n);
  for (Eigen::Index c : cut_points) {
    if (c < 10 || c > n) throw Error("gelman_rubin: cut point " + std::to_string(c) + " out of range");
  }
  std::vector<GelmanRubinSeries> out;
  for (std::size_t p = 0; p < traces[0].names.size(); ++p) {
    GelmanRubinSeries s;
    s.parameter = traces[0].names[p];
    s.cut_points = cut_points;
    for (Eigen::Index c : cut_points) s.values.push_back(psrf(traces, static_cast<int>(p), c));
    out.push_back(std::move(s));
  }
  return out;
}

/// Biased autocorrelation estimate rho(k) = c(k) / c(0), k = 0..max_lag.
inline Vector autocorrelation(const Eigen::Ref<const Vector>& x, int max_lag) {
  const Eigen::Index n = x.size();
  if (max_lag < 0 || n <= max_lag) throw Error("autocorrelation: need more draws than max_lag");
  const Vector d = x.array() - x.mean();
  const double c0 = d.squaredNorm();
  Vector rho(max_lag + 1);
  rho[0] = 1.0;
  for (int k = 1; k <= max_lag; ++k) {
    const double ck = d.head(n - k).dot(d.tail(n - k));
    rho[k] = c0 > 0.0 ? ck / c0 : 0.0;
  }
  return rho;
}

inline Vector autocorrelation(const ChainTrace& trace, const std::string& parameter, int max_lag) {
  return autocorrelation(trace.values.col(trace.index_of(parameter)), max_lag);
}

/// Autocorrelation averaged over chains.
inline Vector mean_autocorrelation(std::span<const ChainTrace> traces, int col, int max_lag) {
  Vector acc = Vector::Zero(max_lag + 1);
  for (const auto& t : traces) acc += autocorrelation(t.values.col(col), max_lag);
  return acc / static_cast<double>(traces.size());
}

struct DiagnosticsReport {
  std::vector<GelmanRubinSeries> gelman_rubin;
  std::vector<std::string> acf_parameters;
  std::vector<Vector> acf;  // chain-averaged, one per parameter
  std::vector<std::string> skipped;  // parameters with zero within-chain variance
};

inline DiagnosticsReport diagnose(std::span<const ChainTrace> traces, int max_lag) {
  DiagnosticsReport rep;
  if (traces.empty()) throw Error("diagnose: no traces");
  const auto& names = traces[0].names;
  const auto cuts = default_cut_points(traces[0].length());
  for (std::size_t p = 0; p < names.size(); ++p) {
    if (traces.size() >= 2) {
      try {
        GelmanRubinSeries s;
        s.parameter = names[p];
        s.cut_points = cuts;
        for (Eigen::Index c : cuts) s.values.push_back(psrf(traces, static_cast<int>(p), c));
        rep.gelman_rubin.push_back(std::move(s));
      } catch (const DegenerateChains&) {
        rep.skipped.push_back(names[p]);
      }
    }
    rep.acf_parameters.push_back(names[p]);
    rep.acf.push_back(mean_autocorrelation(traces, static_cast<int>(p), max_lag));
  }
  return rep;
}

}  // namespace lgm
