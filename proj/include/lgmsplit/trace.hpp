#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "lgmsplit/error.hpp"
#include "lgmsplit/sparse.hpp"

namespace lgm {

/// Recorded draws of one chain: row k of `values` is iteration `iterations[k]`.
struct ChainTrace {
  std::vector<std::string> names;
  std::vector<long> iterations;
  DenseMatrix values;
  int chain = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;

  Eigen::Index length() const noexcept { return values.rows(); }
  Eigen::Index parameters() const noexcept { return values.cols(); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    throw Error("trace has no parameter named '" + name + "'");
  }

  void validate() const {
    if (static_cast<Eigen::Index>(names.size()) != values.cols()) {
      throw DimensionMismatch("trace: " + std::to_string(names.size()) + " names for " +
                              std::to_string(values.cols()) + " columns");
    }
    if (static_cast<Eigen::Index>(iterations.size()) != values.rows()) {
      throw DimensionMismatch("trace: iteration column length differs from value rows");
    }
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
      if (!seen.insert(n).second) throw Error("trace: duplicate parameter name '" + n + "'");
    }
    if (!values.allFinite()) throw Error("trace: non-finite value recorded");
  }
};

}  // namespace lgm
