#pragma once

#include <cmath>
#include <vector>

#include "lgmsplit/likelihood.hpp"

namespace lgm {

/// y_it ~ N(mu_i, exp(tau_i)) with eta = (mu_1..mu_I, tau_1..tau_I).
///
/// With a known observation variance the tau half of eta carries no data
/// (f is exactly quadratic in mu and constant in tau).
class GaussianLikelihood {
 public:
  enum class Mode { MeanLogVariance, KnownVariance };

  /// observations[i] holds the values observed at site i.
  explicit GaussianLikelihood(const std::vector<std::vector<double>>& observations,
                              Mode mode = Mode::MeanLogVariance, double known_variance = 1.0)
      : layout_(PartitionLayout::interleaved(static_cast<int>(observations.size()), 2)),
        mode_(mode),
        known_variance_(known_variance) {
    if (mode == Mode::KnownVariance && !(known_variance > 0.0)) {
      throw NonPositiveScale("GaussianLikelihood: known variance must be positive");
    }
    stats_.reserve(observations.size());
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const auto& y = observations[i];
      if (y.empty()) throw BadDimension("GaussianLikelihood: site " + std::to_string(i) + " has no data");
      Stats s;
      s.n = static_cast<double>(y.size());
      for (double v : y) s.mean += v;
      s.mean /= s.n;
      for (double v : y) s.ss += (v - s.mean) * (v - s.mean);
      stats_.push_back(s);
    }
  }

  const PartitionLayout& layout() const noexcept { return layout_; }
  Mode mode() const noexcept { return mode_; }
  int sites() const noexcept { return static_cast<int>(stats_.size()); }

  double log_lik(int i, const SmallVector& x) const {
    const Stats& s = stats_[static_cast<std::size_t>(i)];
    const double tau = log_variance(x);
    const double d = s.mean - x[0];
    const double q = s.ss + s.n * d * d;
    return -0.5 * s.n * (kLog2Pi + tau) - 0.5 * std::exp(-tau) * q;
  }

  SmallVector gradient(int i, const SmallVector& x) const {
    const Stats& s = stats_[static_cast<std::size_t>(i)];
    const double prec = std::exp(-log_variance(x));
    const double d = s.mean - x[0];
    SmallVector g(2);
    g[0] = prec * s.n * d;
    g[1] = mode_ == Mode::KnownVariance ? 0.0 : -0.5 * s.n + 0.5 * prec * (s.ss + s.n * d * d);
    return g;
  }

  SmallMatrix hessian(int i, const SmallVector& x) const {
    const Stats& s = stats_[static_cast<std::size_t>(i)];
    const double prec = std::exp(-log_variance(x));
    const double d = s.mean - x[0];
    SmallMatrix h = SmallMatrix::Zero(2, 2);
    h(0, 0) = -prec * s.n;
    if (mode_ == Mode::MeanLogVariance) {
      h(0, 1) = h(1, 0) = -prec * s.n * d;
      h(1, 1) = -0.5 * prec * (s.ss + s.n * d * d);
    }
    return h;
  }

 private:
  struct Stats {
    double n = 0.0;
    double mean = 0.0;
    double ss = 0.0;  // centred sum of squares
  };

  static constexpr double kLog2Pi = 1.8378770664093454835606594728112;

  double log_variance(const SmallVector& x) const {
    return mode_ == Mode::KnownVariance ? std::log(known_variance_) : x[1];
  }

  PartitionLayout layout_;
  Mode mode_;
  double known_variance_;
  std::vector<Stats> stats_;
};

}  // namespace lgm
