#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace quadrec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

/// Base class of all quadrec errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Length / shape mismatch, or a size product that overflows.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Iteration cap reached in an eigensolver.
class EigenSolverError : public Error {
 public:
  using Error::Error;
};

/// Inner latent projection produced a non-finite objective.
class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// An iterate became non-finite. Carries the last finite iterate.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, Vector last_finite, std::size_t iteration)
      : Error(what), last_finite_(std::move(last_finite)), iteration_(iteration) {}

  const Vector& last_finite() const noexcept { return last_finite_; }
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  Vector last_finite_;
  std::size_t iteration_;
};

inline void require_length(const Vector& v, Index n, const char* what) {
  if (static_cast<Index>(v.size()) != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

}  // namespace quadrec
