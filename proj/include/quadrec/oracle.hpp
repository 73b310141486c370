#pragma once

// Reference computations and Monte-Carlo checks. Nothing here reuses the
// accumulation code of the modules it checks.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "quadrec/ensemble.hpp"
#include "quadrec/harness.hpp"
#include "quadrec/philox.hpp"
#include "quadrec/sparse.hpp"

namespace quadrec {

struct CheckReport {
  std::string name;
  bool pass = false;
  double observed = 0.0;
  double bound = 0.0;
  std::string detail;
};

/// y_i = sum_{j,l} x_j a^{(i)}_{jl} x_l by a plain triple loop.
inline Vector brute_force_forward(const std::vector<Matrix>& matrices, const Vector& x) {
  Vector y(static_cast<Eigen::Index>(matrices.size()));
  for (std::size_t i = 0; i < matrices.size(); ++i) {
    const Matrix& a = matrices[i];
    if (a.rows() != x.size() || a.cols() != x.size()) {
      throw DimensionError("brute_force_forward: matrix and signal sizes disagree");
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      for (Eigen::Index l = 0; l < x.size(); ++l) s += x[j] * a(j, l) * x[l];
    y[static_cast<Eigen::Index>(i)] = s;
  }
  return y;
}

inline std::vector<Matrix> explicit_matrices(const MeasurementEnsemble& e) {
  std::vector<Matrix> out;
  out.reserve(e.m());
  for (Index i = 0; i < e.m(); ++i) out.push_back(e.matrix(i));
  return out;
}

/// f(z) = (1/4m) sum_i (z^T A_i z - y_i)^2 on explicit matrices.
inline double brute_force_loss(const std::vector<Matrix>& matrices, const Vector& y, const Vector& z) {
  const Vector q = brute_force_forward(matrices, z);
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += (q[i] - y[i]) * (q[i] - y[i]);
  return s / (4.0 * static_cast<double>(y.size()));
}

/// Central differences (f(z + h e_j) - f(z - h e_j)) / 2h of the loss.
inline Vector finite_diff_loss_gradient(const MeasurementSet& set, const Vector& z, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_loss_gradient: h must be > 0");
  require_length(z, set.n(), "finite_diff_loss_gradient");
  const std::vector<Matrix> mats = explicit_matrices(set.ensemble);
  Vector g(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    Vector zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    g[j] = (brute_force_loss(mats, set.y, zp) - brute_force_loss(mats, set.y, zm)) / (2.0 * h);
  }
  return g;
}

/// max_pq |S - x x^T| against 3 max_pq(sd_pq) / sqrt(m), sd_pq the sample
/// standard deviation of y_i Ã^{(i)}_pq.
inline CheckReport expectation_check(Index n, Index m, std::uint64_t seed, const Vector& x,
                                     double sigmas = 3.0) {
  require_length(x, n, "expectation_check");
  const auto ensemble = MeasurementEnsemble::sample(n, m, seed);
  const MeasurementSet set = MeasurementSet::simulate(ensemble, x);
  const Matrix s = data_matrix(set);
  std::vector<double> sum(n * n, 0.0), sum2(n * n, 0.0);
  ensemble.visit_sym([&](Index i, const double* sym) {
    const double yi = set.y[static_cast<Eigen::Index>(i)];
    for (Index e = 0; e < n * n; ++e) {
      const double v = yi * sym[e];
      sum[e] += v;
      sum2[e] += v * v;
    }
  });
  const double md = static_cast<double>(m);
  double observed = 0.0, max_sd = 0.0, worst_z = 0.0;
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) {
      const Index e = p * n + q;
      const double mean = sum[e] / md;
      const double var = m > 1 ? std::max(0.0, (sum2[e] - md * mean * mean) / (md - 1.0)) : 0.0;
      const double sd = std::sqrt(var);
      const double dev = std::abs(s(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) -
                                  x[static_cast<Eigen::Index>(p)] * x[static_cast<Eigen::Index>(q)]);
      observed = std::max(observed, dev);
      max_sd = std::max(max_sd, sd);
      if (sd > 0.0) worst_z = std::max(worst_z, dev / (sd / std::sqrt(md)));
    }
  }
  CheckReport r;
  r.name = "expectation";
  r.observed = observed;
  r.bound = sigmas * max_sd / std::sqrt(md);
  r.pass = r.observed <= r.bound;
  r.detail = "n=" + std::to_string(n) + " m=" + std::to_string(m) + " seed=" +
             std::to_string(seed) + " worst entry at " + std::to_string(worst_z) + " sd";
  return r;
}

/// Bounds used by the concentration suite.
struct ConcentrationBounds {
  double phi_half_width = 0.1;        // m = 1000: |phi - 1| <= 0.1
  double phi_tight_half_width = 0.03;  // m = 10^4
  double support_c = 2.0;             // max_l |I_l - x_l^2| sqrt(m / log n) <= c
  Index phi_seeds = 50;
  Index support_seeds = 20;
  double expectation_sigmas = 3.0;
  Index expectation_seeds = 20;
  Index expectation_required = 19;
};

/// Unit-norm 5-sparse signal used by the concentration checks.
inline Vector unit_probe_signal(Index n, std::uint64_t seed) {
  return sample_sparse_signal(n, std::min<Index>(5, n), seed, true).values;
}

/// max over seeds of |phi - 1| for unit signals at (n, m).
inline CheckReport phi_check(const std::string& name, Index n, Index m, Index seeds,
                             std::uint64_t seed, double half_width) {
  double worst = 0.0;
  Index worst_seed = 0;
  for (Index s = 0; s < seeds; ++s) {
    const std::uint64_t ts = derive_seed(seed, m, s);
    const Vector x = unit_probe_signal(n, derive_seed(ts, 1));
    const auto e = MeasurementEnsemble::sample(n, m, derive_seed(ts, 2), 0);
    const double dev = std::abs(estimate_norm(forward(e, x)) - 1.0);
    if (dev > worst) {
      worst = dev;
      worst_seed = s;
    }
  }
  return {name, worst <= half_width, worst, half_width,
          "n=" + std::to_string(n) + " m=" + std::to_string(m) + " seeds=" + std::to_string(seeds) +
              " worst seed index " + std::to_string(worst_seed)};
}

/// max over seeds of max_l |I_l - x_l^2| sqrt(m / log n).
inline CheckReport support_score_check(Index n, Index m, Index seeds, std::uint64_t seed, double c) {
  double worst = 0.0;
  for (Index s = 0; s < seeds; ++s) {
    const std::uint64_t ts = derive_seed(seed, 7, s);
    const Vector x = unit_probe_signal(n, derive_seed(ts, 1));
    const auto e = MeasurementEnsemble::sample(n, m, derive_seed(ts, 2), 0);
    const MeasurementSet set = MeasurementSet::simulate(e, x);
    const Vector scores = support_scores(set);
    const double dev = (scores - x.cwiseProduct(x)).cwiseAbs().maxCoeff();
    worst = std::max(worst, dev * std::sqrt(static_cast<double>(m) / std::log(static_cast<double>(n))));
  }
  return {"support_scores", worst <= c, worst, c,
          "n=" + std::to_string(n) + " m=" + std::to_string(m) + " seeds=" + std::to_string(seeds)};
}

/// expectation_check at n = 10, m = 10^5 over several seeds; passes when
/// at least `required` seeds lie inside their envelope.
inline CheckReport expectation_suite(std::uint64_t seed, const ConcentrationBounds& b = {}) {
  constexpr Index n = 10, m = 100000;
  Index passed = 0;
  double worst = 0.0;
  for (Index s = 0; s < b.expectation_seeds; ++s) {
    const std::uint64_t ts = derive_seed(seed, 3, s);
    const Vector x = unit_probe_signal(n, derive_seed(ts, 1));
    const CheckReport r = expectation_check(n, m, derive_seed(ts, 2), x, b.expectation_sigmas);
    if (r.pass) ++passed;
    worst = std::max(worst, r.observed / r.bound);
  }
  CheckReport out;
  out.name = "expectation";
  out.observed = static_cast<double>(passed);
  out.bound = static_cast<double>(b.expectation_required);
  out.pass = passed >= b.expectation_required;
  out.detail = std::to_string(passed) + "/" + std::to_string(b.expectation_seeds) +
               " seeds inside the envelope, worst deviation/bound " + std::to_string(worst);
  return out;
}

inline std::vector<CheckReport> concentration_suite(std::uint64_t seed,
                                                    const ConcentrationBounds& b = {}) {
  return {phi_check("phi_m1000", 100, 1000, b.phi_seeds, seed, b.phi_half_width),
          phi_check("phi_m10000", 100, 10000, b.phi_seeds, seed, b.phi_tight_half_width),
          support_score_check(500, 500, b.support_seeds, seed, b.support_c)};
}

}  // namespace quadrec
