#pragma once

// Sparse recovery: spectral initialization with support estimation and
// thresholded Wirtinger flow (TWF). Plain Wirtinger flow is TWF with beta = 0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrec/eigen_sym.hpp"
#include "quadrec/ensemble.hpp"
#include "quadrec/metrics.hpp"

namespace quadrec {

enum class ThresholdKind { Hard, Soft };

inline const char* to_string(ThresholdKind k) noexcept {
  return k == ThresholdKind::Hard ? "hard" : "soft";
}

/// beta_t = beta0 * factor^floor(t / period). Constant is factor = 1.
struct BetaSchedule {
  double beta0 = 0.5;
  double factor = 0.5;
  Index period = 1000;

  static BetaSchedule constant(double beta) { return {beta, 1.0, 1}; }
  static BetaSchedule damped(double beta0, double factor, Index period) {
    return {beta0, factor, period};
  }

  bool is_constant() const noexcept { return factor == 1.0; }

  double at(Index t) const {
    double b = beta0;
    for (Index e = t / period; e > 0; --e) b *= factor;
    return b;
  }

  void validate() const {
    if (!(beta0 >= 0.0)) throw std::invalid_argument("beta0 must be >= 0");
    if (!(factor > 0.0 && factor <= 1.0)) throw std::invalid_argument("beta factor must lie in (0, 1]");
    if (period < 1) throw std::invalid_argument("beta period must be >= 1");
  }
};

struct SparseConfig {
  double alpha = 0.5;
  BetaSchedule beta = BetaSchedule::damped(0.5, 0.5, 1000);
  double mu = 0.1;
  Index iterations = 4000;
  ThresholdKind kind = ThresholdKind::Soft;
  std::optional<double> early_stop_tol;

  void validate() const {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
    if (!(mu > 0.0)) throw std::invalid_argument("mu must be > 0");
    if (early_stop_tol && !(*early_stop_tol > 0.0)) {
      throw std::invalid_argument("early_stop_tol must be > 0");
    }
    beta.validate();
  }
};

struct SparseState {
  Index t = 0;
  Vector x;
  double phi = 0.0;
  std::vector<Index> support0;
  std::vector<TraceRecord> trace;
};

/// phi = (mean y_i^2)^(1/4).
inline double estimate_norm(const Vector& y) {
  if (y.size() == 0) throw std::invalid_argument("estimate_norm: empty measurement vector");
  return std::sqrt(std::sqrt(y.squaredNorm() / static_cast<double>(y.size())));
}

/// I_l = (1/m) sum_i y_i a^{(i)}_{ll}.
inline Vector support_scores(const MeasurementSet& set) {
  const Index n = set.n();
  std::vector<double> acc(n, 0.0);
  set.ensemble.visit_diagonal([&](Index i, std::span<const double> diag) {
    const double yi = set.y[static_cast<Eigen::Index>(i)];
    for (Index l = 0; l < n; ++l) acc[l] += yi * diag[l];
  });
  Vector scores(static_cast<Eigen::Index>(n));
  const double m = static_cast<double>(set.m());
  for (Index l = 0; l < n; ++l) scores[static_cast<Eigen::Index>(l)] = acc[l] / m;
  return scores;
}

inline double support_threshold(double phi, double alpha, Index n, Index m) {
  return alpha * phi * phi * std::sqrt(std::log(static_cast<double>(n)) / static_cast<double>(m));
}

/// {l : I_l > alpha phi^2 sqrt(log n / m)}, or {argmax_l I_l} when that is empty.
inline std::vector<Index> estimate_support(const Vector& scores, double phi, double alpha, Index n,
                                           Index m) {
  require_length(scores, n, "estimate_support");
  if (n == 0 || m == 0) throw std::invalid_argument("estimate_support: n and m must be >= 1");
  const double thr = support_threshold(phi, alpha, n, m);
  std::vector<Index> s;
  for (Index l = 0; l < n; ++l)
    if (scores[static_cast<Eigen::Index>(l)] > thr) s.push_back(l);
  if (s.empty()) {
    Eigen::Index best = 0;
    for (Eigen::Index l = 1; l < scores.size(); ++l)
      if (scores[l] > scores[best]) best = l;
    s.push_back(static_cast<Index>(best));
  }
  return s;
}

struct SpectralInit {
  Vector x0;
  std::vector<Index> support;
  double phi = 0.0;
};

/// x0 = phi v, v the leading unit eigenvector of the data matrix restricted
/// to `support` x `support`, embedded with zeros elsewhere.
inline SpectralInit spectral_init_on(const MeasurementSet& set, std::vector<Index> support,
                                     double phi) {
  if (support.empty()) throw std::invalid_argument("spectral_init_on: empty support");
  std::sort(support.begin(), support.end());
  for (Index l : support)
    if (l >= set.n()) throw IndexError("spectral_init_on: support index out of range");
  const Matrix block = data_block(set, support);
  const EigenPair lead = leading_eigenpair(block);
  Vector x0 = Vector::Zero(static_cast<Eigen::Index>(set.n()));
  for (Index r = 0; r < support.size(); ++r)
    x0[static_cast<Eigen::Index>(support[r])] = phi * lead.vector[static_cast<Eigen::Index>(r)];
  return {std::move(x0), std::move(support), phi};
}

inline SpectralInit spectral_init(const MeasurementSet& set, double alpha) {
  const double phi = estimate_norm(set.y);
  const Vector scores = support_scores(set);
  return spectral_init_on(set, estimate_support(scores, phi, alpha, set.n(), set.m()), phi);
}

/// Standard spectral initialization on the full n x n data matrix.
inline Vector spectral_init_unrestricted(const MeasurementSet& set) {
  const double phi = estimate_norm(set.y);
  return phi * leading_eigenpair(data_matrix(set)).vector;
}

/// Hard: a if |a| > tau else 0. Soft: sign(a) max(|a| - tau, 0).
inline Vector threshold(const Vector& v, double tau, ThresholdKind kind) {
  if (!(tau >= 0.0)) throw std::invalid_argument("threshold: tau must be >= 0");
  Vector out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double a = v[j];
    if (!(std::abs(a) > tau)) {
      out[j] = 0.0;
    } else if (kind == ThresholdKind::Hard) {
      out[j] = a;
    } else {
      out[j] = a > 0 ? a - tau : a + tau;
    }
  }
  return out;
}

/// One pass over the ensemble at z: residuals r_i = z^T A_i z - y_i,
/// gradient (1/m) sum_i r_i Ã_i z, and sum_i r_i^2.
struct ResidualPass {
  Vector gradient;
  double residual_sq = 0.0;
};

inline ResidualPass residual_pass(const MeasurementSet& set, const Vector& z) {
  require_length(z, set.n(), "residual_pass");
  const Index n = set.n();
  const std::vector<Index> cols = MeasurementEnsemble::support_of(z);
  std::vector<double> acc(n, 0.0), u(n);
  double rsq = 0.0;
  set.ensemble.visit_sym_rows(cols, [&](Index i, std::span<const double* const> rows) {
    std::fill(u.begin(), u.end(), 0.0);
    MeasurementEnsemble::accumulate_rows(rows, cols, z, u.data());
    double q = 0.0;
    for (Index c : cols) q += z[static_cast<Eigen::Index>(c)] * u[c];
    const double r = q - set.y[static_cast<Eigen::Index>(i)];
    rsq += r * r;
    if (r != 0.0)
      for (Index j = 0; j < n; ++j) acc[j] += r * u[j];
  });
  ResidualPass out;
  out.gradient.resize(static_cast<Eigen::Index>(n));
  const double m = static_cast<double>(set.m());
  for (Index j = 0; j < n; ++j) out.gradient[static_cast<Eigen::Index>(j)] = acc[j] / m;
  out.residual_sq = rsq;
  return out;
}

/// (1/m) sum_i (z^T A_i z - y_i) Ã_i z.
inline Vector gradient(const MeasurementSet& set, const Vector& z) {
  return residual_pass(set, z).gradient;
}

/// f(z) = (1/4m) sum_i (z^T A_i z - y_i)^2.
inline double loss(const MeasurementSet& set, const Vector& z) {
  const Vector r = forward(set.ensemble, z) - set.y;
  return r.squaredNorm() / (4.0 * static_cast<double>(set.m()));
}

inline double threshold_level_from(double residual_sq, double beta, Index m, double z_norm) {
  const double md = static_cast<double>(m);
  return std::sqrt(beta * residual_sq / (md * md)) * z_norm;
}

/// tau(z) = [beta / m^2 sum_i (z^T A_i z - y_i)^2]^(1/2) ||z||.
inline double threshold_level(const MeasurementSet& set, const Vector& z, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("threshold_level: beta must be >= 0");
  require_length(z, set.n(), "threshold_level");
  const Vector r = forward(set.ensemble, z) - set.y;
  return threshold_level_from(r.squaredNorm(), beta, set.m(), z.norm());
}

inline std::optional<double> sparse_error(const MeasurementSet& set, const Vector& x) {
  if (!set.truth || set.truth->norm() == 0.0) return std::nullopt;
  return relative_distance(x, *set.truth);
}

/// In-place form of twf_step. On divergence the state keeps x_t and the
/// appended trace record.
inline void twf_advance(const MeasurementSet& set, SparseState& state, const SparseConfig& cfg) {
  if (!(state.phi > 0.0)) throw std::invalid_argument("twf_step: phi must be > 0");
  const ResidualPass pass = residual_pass(set, state.x);
  const double tau = threshold_level_from(pass.residual_sq, cfg.beta.at(state.t), set.m(),
                                          state.x.norm());
  const double scale = cfg.mu / (state.phi * state.phi);
  state.trace.push_back({state.t, std::sqrt(pass.residual_sq), count_nonzeros(state.x),
                         sparse_error(set, state.x)});
  const Vector step = state.x - scale * pass.gradient;
  const bool finite = std::isfinite(scale * tau) && std::isfinite(pass.residual_sq) && all_finite(step);
  Vector next = finite ? threshold(step, scale * tau, cfg.kind) : step;
  if (!finite || !all_finite(next)) {
    throw DivergenceError("twf_step: non-finite iterate at t = " + std::to_string(state.t + 1),
                          state.x, state.t + 1);
  }
  state.x = std::move(next);
  ++state.t;
}

/// x_{t+1} = T_{(mu/phi^2) tau(x_t)}(x_t - (mu/phi^2) grad f(x_t)) with beta = beta_t.
/// Appends the trace record of x_t.
inline SparseState twf_step(const MeasurementSet& set, SparseState state,
                            const SparseConfig& cfg) {
  twf_advance(set, state, cfg);
  return state;
}

/// Algorithm 1 followed by cfg.iterations TWF steps.
inline RecoveryResult solve_twf(const MeasurementSet& set, const SparseConfig& cfg) {
  cfg.validate();
  SpectralInit init = spectral_init(set, cfg.alpha);
  SparseState state{0, std::move(init.x0), init.phi, std::move(init.support), {}};
  RecoveryResult result;
  if (state.phi == 0.0) {
    result.message = "all measurements are zero; returning the zero initializer";
  }
  while (state.t < cfg.iterations && state.phi > 0.0) {
    const Vector previous = state.x;
    try {
      twf_advance(set, state, cfg);
    } catch (const DivergenceError& e) {
      result.status = Status::Diverged;
      result.message = e.what();
      break;
    }
    if (cfg.early_stop_tol) {
      const double rel = (state.x - previous).norm() / std::max(previous.norm(), 1e-30);
      if (rel < *cfg.early_stop_tol) {
        result.status = Status::EarlyStopped;
        break;
      }
    }
  }
  if (result.status != Status::Diverged) {
    const Vector r = forward(set.ensemble, state.x) - set.y;
    state.trace.push_back({state.t, r.norm(), count_nonzeros(state.x), sparse_error(set, state.x)});
  }
  result.estimate = std::move(state.x);
  result.iterations = state.t;
  result.trace = std::move(state.trace);
  return result;
}

}  // namespace quadrec
