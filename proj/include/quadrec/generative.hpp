#pragma once

// Generative priors: models G: B^k(r) -> R^n with a range projection, the
// projected power method and projected gradient descent.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrec/ensemble.hpp"
#include "quadrec/metrics.hpp"
#include "quadrec/normal.hpp"
#include "quadrec/sparse.hpp"

namespace quadrec {

/// Latent-space projected gradient descent settings.
struct ProjectionConfig {
  Index steps = 100;
  double step_size = 0.1;
  Index restarts = 5;
  std::uint64_t restart_seed = 0;

  void validate() const {
    if (steps < 1) throw std::invalid_argument("projection steps must be >= 1");
    if (restarts < 1) throw std::invalid_argument("projection restarts must be >= 1");
    if (!(step_size > 0.0)) throw std::invalid_argument("projection step_size must be > 0");
  }
};

class GenerativeModel {
 public:
  virtual ~GenerativeModel() = default;

  virtual Index n() const = 0;
  virtual Index k() const = 0;
  virtual double radius() const = 0;
  /// Upper bound on the Lipschitz constant; reported, never used by solvers.
  virtual std::optional<double> lipschitz_bound() const = 0;
  virtual Vector decode(const Vector& z) const = 0;

  /// ||decode(z) - v||^2 and its gradient in z.
  virtual double latent_objective(const Vector& z, const Vector& v, Vector* grad) const = 0;

  /// A point of G(B^k(r)) closest to v, exactly or approximately.
  virtual Vector project(const Vector& v, const ProjectionConfig& inner) const = 0;
  Vector project(const Vector& v) const { return project(v, projection_config()); }

  /// Distance from project(decode(z)) to decode(z) the model guarantees.
  virtual double projection_tolerance() const = 0;
  virtual ProjectionConfig projection_config() const { return {}; }
};

namespace detail {

/// Output map g -> g / ||g|| (or g when not normalizing). Given dL/d(out),
/// overwrites it with dL/dg. Zero g maps to zero with zero gradient.
inline Vector normalize_output(const Vector& g, bool normalize) {
  if (!normalize) return g;
  const double ng = g.norm();
  return ng > 0.0 ? Vector(g / ng) : Vector::Zero(g.size());
}

inline void normalize_backward(const Vector& g, const Vector& out, bool normalize, Vector& dout) {
  if (!normalize) return;
  const double ng = g.norm();
  if (ng == 0.0) {
    dout.setZero();
    return;
  }
  dout = (dout - out * out.dot(dout)) / ng;
}

inline void clip_to_ball(Vector& z, double r) {
  const double nz = z.norm();
  if (nz > r) z *= r / nz;
}

/// Standard normal matrix, column-major draw order from one counter stream.
inline Matrix gaussian_matrix(Index rows, Index cols, std::uint64_t seed, std::uint64_t stream) {
  CounterStream s(seed, stream);
  Matrix a(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) a(r, c) = s.normal();
  return a;
}

}  // namespace detail

/// Uniform draw from the ball B^k(r).
inline Vector uniform_in_ball(Index k, double r, CounterStream& s) {
  Vector z(static_cast<Eigen::Index>(k));
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = s.normal();
  const double nz = z.norm();
  const double radius = r * std::pow(s.uniform(), 1.0 / static_cast<double>(k));
  return nz > 0.0 ? Vector(z * (radius / nz)) : z;
}

/// Modified Gram–Schmidt, columns in order. Throws on rank deficiency.
inline Matrix orthonormalize(Matrix a) {
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index p = 0; p < c; ++p) a.col(c) -= a.col(p).dot(a.col(c)) * a.col(p);
    const double nc = a.col(c).norm();
    if (!(nc > 0.0)) throw std::invalid_argument("orthonormalize: rank-deficient matrix");
    a.col(c) /= nc;
  }
  return a;
}

/// Best-of-restarts latent descent on z -> ||decode(z) - v||^2 with clipping
/// to B^k(r) after every step. Restart 0 starts at z = 0, the others uniformly
/// in the ball.
inline Vector latent_project(const GenerativeModel& model, const Vector& v,
                             const ProjectionConfig& cfg) {
  cfg.validate();
  require_length(v, model.n(), "latent_project");
  const Index k = model.k();
  const double r = model.radius();
  double best_obj = std::numeric_limits<double>::infinity();
  Vector best_z;
  Vector grad(static_cast<Eigen::Index>(k));
  for (Index restart = 0; restart < cfg.restarts; ++restart) {
    Vector z = Vector::Zero(static_cast<Eigen::Index>(k));
    if (restart > 0) {
      CounterStream s(cfg.restart_seed, restart);
      z = uniform_in_ball(k, r, s);
    }
    for (Index step = 0; step < cfg.steps; ++step) {
      const double obj = model.latent_objective(z, v, &grad);
      if (!std::isfinite(obj) || !grad.allFinite()) {
        throw ProjectionError("latent_project: non-finite objective in restart " +
                              std::to_string(restart));
      }
      z -= cfg.step_size * grad;
      detail::clip_to_ball(z, r);
    }
    const double obj = model.latent_objective(z, v, nullptr);
    if (!std::isfinite(obj)) {
      throw ProjectionError("latent_project: non-finite objective in restart " +
                            std::to_string(restart));
    }
    if (obj < best_obj) {
      best_obj = obj;
      best_z = z;
    }
  }
  return model.decode(best_z);
}

/// G(z) = W z with orthonormal W (n x k), optionally normalized to the sphere.
/// The projection onto the range is exact.
class SubspaceModel final : public GenerativeModel {
 public:
  SubspaceModel(Matrix basis, double radius, bool normalize = false)
      : w_(std::move(basis)), r_(radius), normalize_(normalize) {
    if (!(r_ > 0.0)) throw std::invalid_argument("SubspaceModel: radius must be > 0");
    if (w_.cols() < 1 || w_.rows() < w_.cols()) {
      throw DimensionError("SubspaceModel: basis must be n x k with 1 <= k <= n");
    }
    const double dev = (w_.transpose() * w_ - Matrix::Identity(w_.cols(), w_.cols())).cwiseAbs().maxCoeff();
    if (dev > 1e-12) throw std::invalid_argument("SubspaceModel: basis columns are not orthonormal");
  }

  /// W = Q factor (modified Gram–Schmidt) of a seeded n x k Gaussian matrix.
  static SubspaceModel sample(Index n, Index k, double radius, std::uint64_t seed,
                              bool normalize = false) {
    if (k < 1 || k > n) throw DimensionError("SubspaceModel: need 1 <= k <= n");
    return SubspaceModel(orthonormalize(detail::gaussian_matrix(n, k, seed, 0)), radius,
                         normalize);
  }

  Index n() const override { return static_cast<Index>(w_.rows()); }
  Index k() const override { return static_cast<Index>(w_.cols()); }
  double radius() const override { return r_; }
  bool normalized() const noexcept { return normalize_; }
  const Matrix& basis() const noexcept { return w_; }

  std::optional<double> lipschitz_bound() const override {
    if (normalize_) return std::nullopt;  // unbounded near z = 0
    return 1.0;
  }

  Vector decode(const Vector& z) const override {
    require_length(z, k(), "SubspaceModel::decode");
    return detail::normalize_output(w_ * z, normalize_);
  }

  double latent_objective(const Vector& z, const Vector& v, Vector* grad) const override {
    const Vector g = w_ * z;
    const Vector out = detail::normalize_output(g, normalize_);
    const Vector diff = out - v;
    if (grad) {
      Vector dout = 2.0 * diff;
      detail::normalize_backward(g, out, normalize_, dout);
      *grad = w_.transpose() * dout;
    }
    return diff.squaredNorm();
  }

  /// Unnormalized: W clip_r(W^T v). Normalized: P_W v / ||P_W v||.
  /// Points already on the range up to round-off come back unchanged.
  Vector project(const Vector& v, const ProjectionConfig&) const override {
    require_length(v, n(), "SubspaceModel::project");
    Vector z = w_.transpose() * v;
    Vector p;
    if (normalize_) {
      const double nz = z.norm();
      if (nz == 0.0) return w_.col(0);  // every unit vector of the span is equidistant
      p = w_ * (z / nz);
    } else {
      detail::clip_to_ball(z, r_);
      p = w_ * z;
    }
    if ((p - v).norm() <= kSnapTolerance * std::max(1.0, v.norm())) return v;
    return p;
  }
  using GenerativeModel::project;

  double projection_tolerance() const override { return 1e-12; }

 private:
  static constexpr double kSnapTolerance = 1e-13;

  Matrix w_;
  double r_;
  bool normalize_;
};

/// G(z) = relu(W2 relu(W1 z + b1) + b2), k -> h -> n, optionally normalized.
/// Projection by latent descent.
class ReluDecoderModel final : public GenerativeModel {
 public:
  static ReluDecoderModel sample(Index n, Index h, Index k, double radius, std::uint64_t seed,
                                 bool normalize_output, ProjectionConfig projection = {}) {
    if (n < 1 || h < 1 || k < 1) throw DimensionError("ReluDecoderModel: dimensions must be >= 1");
    if (!(radius > 0.0)) throw std::invalid_argument("ReluDecoderModel: radius must be > 0");
    projection.validate();
    ReluDecoderModel m;
    m.w1_ = detail::gaussian_matrix(h, k, seed, 0) / std::sqrt(static_cast<double>(k));
    m.b1_ = 0.1 * detail::gaussian_matrix(h, 1, seed, 1).col(0);
    m.w2_ = detail::gaussian_matrix(n, h, seed, 2) / std::sqrt(static_cast<double>(h));
    m.b2_ = 0.1 * detail::gaussian_matrix(n, 1, seed, 3).col(0);
    m.r_ = radius;
    m.normalize_ = normalize_output;
    m.seed_ = seed;
    m.projection_ = projection;
    return m;
  }

  Index n() const override { return static_cast<Index>(w2_.rows()); }
  Index k() const override { return static_cast<Index>(w1_.cols()); }
  Index hidden() const { return static_cast<Index>(w1_.rows()); }
  double radius() const override { return r_; }
  bool normalized() const noexcept { return normalize_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Product of layer Frobenius norms (of the map before normalization).
  std::optional<double> lipschitz_bound() const override { return w1_.norm() * w2_.norm(); }

  Vector decode(const Vector& z) const override {
    require_length(z, k(), "ReluDecoderModel::decode");
    const Vector h1 = (w1_ * z + b1_).cwiseMax(0.0);
    return detail::normalize_output((w2_ * h1 + b2_).cwiseMax(0.0), normalize_);
  }

  double latent_objective(const Vector& z, const Vector& v, Vector* grad) const override {
    const Vector a1 = w1_ * z + b1_;
    const Vector h1 = a1.cwiseMax(0.0);
    const Vector a2 = w2_ * h1 + b2_;
    const Vector g = a2.cwiseMax(0.0);
    const Vector out = detail::normalize_output(g, normalize_);
    const Vector diff = out - v;
    if (grad) {
      Vector d = 2.0 * diff;
      detail::normalize_backward(g, out, normalize_, d);
      const Vector da2 = (a2.array() > 0.0).select(d, 0.0);
      const Vector dh1 = w2_.transpose() * da2;
      const Vector da1 = (a1.array() > 0.0).select(dh1, 0.0);
      *grad = w1_.transpose() * da1;
    }
    return diff.squaredNorm();
  }

  Vector project(const Vector& v, const ProjectionConfig& inner) const override {
    return latent_project(*this, v, inner);
  }
  using GenerativeModel::project;

  double projection_tolerance() const override { return 5e-2; }
  ProjectionConfig projection_config() const override { return projection_; }

 private:
  ReluDecoderModel() = default;

  Matrix w1_, w2_;
  Vector b1_, b2_;
  double r_ = 1.0;
  bool normalize_ = false;
  std::uint64_t seed_ = 0;
  ProjectionConfig projection_;
};

/// Closed-form projection onto {W z : ||z|| <= r}.
inline Vector subspace_project(const SubspaceModel& model, const Vector& v) {
  return model.project(v);
}

/// o_1 = (1/sqrt(n), ..., 1/sqrt(n)).
inline Vector default_w0(Index n) {
  if (n < 1) throw std::invalid_argument("default_w0: n must be >= 1");
  return Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / std::sqrt(static_cast<double>(n)));
}

struct PowerResult {
  Vector estimate;
  std::string warning;
};

inline void check_unit(const Vector& w0) {
  if (std::abs(w0.norm() - 1.0) > 1e-10) {
    throw std::invalid_argument("projected_power: w0 must have unit norm");
  }
}

/// P_G(S w0) for an explicit data matrix S.
inline PowerResult projected_power_from_matrix(const Matrix& s, const GenerativeModel& model,
                                               const Vector& w0) {
  require_length(w0, model.n(), "projected_power w0");
  if (s.rows() != w0.size() || s.cols() != w0.size()) {
    throw DimensionError("projected_power: data matrix must be n x n");
  }
  check_unit(w0);
  return {model.project(s * w0), {}};
}

/// P_G(S_in w0), S_in applied in one streaming pass.
inline PowerResult projected_power(const MeasurementSet& set, const GenerativeModel& model,
                                   const Vector& w0) {
  require_length(w0, set.n(), "projected_power w0");
  if (model.n() != set.n()) throw DimensionError("projected_power: model and data disagree on n");
  check_unit(w0);
  PowerResult out{model.project(data_apply(set, w0)), {}};
  if (set.truth && w0.dot(*set.truth) <= 0.0) {
    out.warning = "w0 is not positively correlated with the truth";
  }
  return out;
}

struct PGDConfig {
  double mu = 0.9;
  Index iterations = 10;
  double epsilon = 0.05;
  std::optional<ProjectionConfig> inner;

  void validate() const {
    if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("pgd mu must lie in (0, 1]");
    if (inner) inner->validate();
  }
};

inline std::optional<double> generative_error(const MeasurementSet& set, const Vector& x) {
  if (!set.truth || set.truth->norm() == 0.0) return std::nullopt;
  return signed_relative_distance(x, *set.truth);
}

/// x_{t+1} = P_G(x_t - mu grad f(x_t)), starting from P_G(x0). A gradient step
/// that leaves the iterate unchanged skips the projection.
inline RecoveryResult solve_pgd(const MeasurementSet& set, const GenerativeModel& model,
                                const Vector& x0, const PGDConfig& cfg) {
  cfg.validate();
  require_length(x0, set.n(), "solve_pgd x0");
  if (model.n() != set.n()) throw DimensionError("solve_pgd: model and data disagree on n");
  const ProjectionConfig inner = cfg.inner.value_or(model.projection_config());
  RecoveryResult result;
  Vector x = model.project(x0, inner);
  Index t = 0;
  for (; t < cfg.iterations; ++t) {
    const ResidualPass pass = residual_pass(set, x);
    result.trace.push_back({t, std::sqrt(pass.residual_sq), count_nonzeros(x), generative_error(set, x)});
    const Vector step = x - cfg.mu * pass.gradient;
    Vector next = step == x ? x : model.project(step, inner);
    if (!all_finite(next)) {
      result.status = Status::Diverged;
      result.message = "solve_pgd: non-finite iterate at t = " + std::to_string(t + 1);
      break;
    }
    x = std::move(next);
  }
  if (result.status != Status::Diverged) {
    const Vector r = forward(set.ensemble, x) - set.y;
    result.trace.push_back({t, r.norm(), count_nonzeros(x), generative_error(set, x)});
  }
  result.estimate = std::move(x);
  result.iterations = t;
  return result;
}

/// 2 - (2 - 7 e0) mu < 1 - 2 eps.
inline bool check_step_condition(double x0_err, double mu, double eps) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("check_step_condition: mu must lie in (0, 1]");
  if (!(eps > 0.0 && eps <= 0.5)) throw std::invalid_argument("check_step_condition: eps must lie in (0, 1/2]");
  if (!(x0_err >= 0.0)) throw std::invalid_argument("check_step_condition: x0_err must be >= 0");
  return 2.0 - (2.0 - 7.0 * x0_err) * mu < 1.0 - 2.0 * eps;
}

}  // namespace quadrec
