#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lgmsplit/gmrf.hpp"
#include "lgmsplit/likelihood.hpp"

namespace lgm {

using LogPriorFn = std::function<double(const Vector&)>;

/// A complete latent Gaussian model: latent structure, likelihood, and the
/// hyperprior on theta. log_prior returns -inf outside the admissible set; an
/// empty log_prior means a flat prior.
template <PartitionedLikelihood Lik>
struct ModelSpec {
  LatentStructure structure;
  Lik likelihood;
  LogPriorFn log_prior;
  Vector theta_init;
  Vector eta_init;
  // true when every theta coordinate lives on the positive half-line
  bool theta_positive = false;
  std::vector<std::string> theta_names;
  std::vector<std::string> eta_names;
  std::vector<std::string> nu_names;

  int n_theta() const noexcept { return static_cast<int>(theta_init.size()); }

  double prior(const Vector& theta) const { return log_prior ? log_prior(theta) : 0.0; }

  void validate() const {
    if (likelihood.layout().n_eta() != structure.n_eta()) {
      throw DimensionMismatch("model: likelihood layout covers " +
                              std::to_string(likelihood.layout().n_eta()) + " eta entries, Z has " +
                              std::to_string(structure.n_eta()) + " rows");
    }
    if (eta_init.size() != structure.n_eta()) throw DimensionMismatch("model: eta_init length");
    auto check_names = [](const std::vector<std::string>& names, Eigen::Index n, const char* what) {
      if (!names.empty() && static_cast<Eigen::Index>(names.size()) != n) {
        throw DimensionMismatch(std::string("model: wrong number of ") + what + " names");
      }
    };
    check_names(theta_names, theta_init.size(), "theta");
    check_names(eta_names, structure.n_eta(), "eta");
    check_names(nu_names, structure.n_nu(), "nu");
  }
};

inline std::vector<std::string> indexed_names(const std::string& stem, int n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

}  // namespace lgm
