#pragma once

#include <stdexcept>
#include <string>

namespace lgm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class BadDimension : public Error {
 public:
  using Error::Error;
};

class NonPositiveScale : public Error {
 public:
  using Error::Error;
};

class TooLargeForDense : public Error {
 public:
  using Error::Error;
};

/// Raised when a Cholesky pivot is <= 0 (or underflows). `pivot()` is the
/// elimination step, `original_index()` the row/column of the unpermuted matrix.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(int pivot, int original_index, double value)
      : Error("matrix is not positive definite: pivot " + std::to_string(pivot) +
              " (row " + std::to_string(original_index) + ") has value " +
              std::to_string(value)),
        pivot_(pivot),
        original_index_(original_index) {}

  int pivot() const noexcept { return pivot_; }
  int original_index() const noexcept { return original_index_; }

 private:
  int pivot_;
  int original_index_;
};

class NonConvergence : public Error {
 public:
  explicit NonConvergence(const std::string& what, int partition = -1)
      : Error(what), partition_(partition) {}
  int partition() const noexcept { return partition_; }

 private:
  int partition_;
};

class ModeNotFound : public NonConvergence {
 public:
  explicit ModeNotFound(int partition)
      : NonConvergence("mode search failed in partition " + std::to_string(partition),
                       partition) {}
};

class HessianNotNegativeDefinite : public Error {
 public:
  using Error::Error;
};

class DegenerateChains : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgm
