#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrec/errors.hpp"

namespace quadrec {

/// min over s in {+1, -1} of ||xhat - s x|| / ||x||.
inline double relative_distance(const Vector& xhat, const Vector& x) {
  if (xhat.size() != x.size()) throw DimensionError("relative_distance: length mismatch");
  const double nx = x.norm();
  if (nx == 0.0) throw std::invalid_argument("relative_distance: zero truth vector");
  return std::min((xhat - x).norm(), (xhat + x).norm()) / nx;
}

/// ||xhat - x|| / ||x|| without the sign flip (generative track).
inline double signed_relative_distance(const Vector& xhat, const Vector& x) {
  if (xhat.size() != x.size()) throw DimensionError("signed_relative_distance: length mismatch");
  const double nx = x.norm();
  if (nx == 0.0) throw std::invalid_argument("signed_relative_distance: zero truth vector");
  return (xhat - x).norm() / nx;
}

/// x^T (xhat / ||xhat||).
inline double cosine_similarity(const Vector& xhat, const Vector& x) {
  if (xhat.size() != x.size()) throw DimensionError("cosine_similarity: length mismatch");
  const double nh = xhat.norm();
  if (nh == 0.0) throw std::invalid_argument("cosine_similarity: zero estimate vector");
  return x.dot(xhat) / nh;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Index count_nonzeros(const Vector& v) {
  return static_cast<Index>((v.array() != 0.0).count());
}

/// One row of an iteration trace. `error` is the distance to the truth when
/// it is known (sign-invariant for the sparse track, signed for the generative one).
struct TraceRecord {
  Index t = 0;
  double residual_norm = 0.0;
  Index nnz = 0;
  std::optional<double> error;
};

enum class Status { Completed, EarlyStopped, Diverged };

inline const char* to_string(Status s) noexcept {
  switch (s) {
    case Status::Completed: return "completed";
    case Status::EarlyStopped: return "early_stopped";
    case Status::Diverged: return "diverged";
  }
  return "unknown";
}

struct RecoveryResult {
  Vector estimate;
  Status status = Status::Completed;
  Index iterations = 0;
  std::vector<TraceRecord> trace;
  std::string message;
};

}  // namespace quadrec
