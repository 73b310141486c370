#pragma once

// Trials, phase-transition grids and the spectral-closeness sweep.
//
// Seeds: a trial with seed s draws its signal from derive_seed(s, 1), its
// ensemble from derive_seed(s, 2), its initial vector from derive_seed(s, 4)
// and its projection restarts from derive_seed(s, 5). Grid cell (k, m) runs
// trial t with seed derive_seed(base, k, m, t).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "quadrec/eigen_sym.hpp"
#include "quadrec/ensemble.hpp"
#include "quadrec/generative.hpp"
#include "quadrec/metrics.hpp"
#include "quadrec/philox.hpp"
#include "quadrec/sparse.hpp"

namespace quadrec {

inline constexpr double kDefaultSuccessThreshold = 1e-3;

enum class Algorithm { WF, TWF, PPower, PGD, PPowerThenPGD };

inline const char* to_string(Algorithm a) noexcept {
  switch (a) {
    case Algorithm::WF: return "wf";
    case Algorithm::TWF: return "twf";
    case Algorithm::PPower: return "ppower";
    case Algorithm::PGD: return "pgd";
    case Algorithm::PPowerThenPGD: return "ppower_pgd";
  }
  return "unknown";
}

inline bool is_sparse(Algorithm a) noexcept { return a == Algorithm::WF || a == Algorithm::TWF; }

enum class PriorKind { Sparse, Subspace, ReluDecoder };

inline const char* to_string(PriorKind p) noexcept {
  switch (p) {
    case PriorKind::Sparse: return "sparse";
    case PriorKind::Subspace: return "subspace";
    case PriorKind::ReluDecoder: return "relu_decoder";
  }
  return "unknown";
}

/// Generative prior description. The model is shared by all trials.
struct PriorSpec {
  PriorKind kind = PriorKind::Sparse;
  std::uint64_t seed = 0;
  Index hidden = 64;
  double radius = 2.0;
  bool normalize = false;
  ProjectionConfig projection;
};

enum class PgdInit { Flat, PPower };

inline const char* to_string(PgdInit i) noexcept { return i == PgdInit::Flat ? "flat" : "ppower"; }

struct TrialSpec {
  Index n = 100;
  Index k = 10;  // sparsity, or latent dimension for generative priors
  Index m = 200;
  Algorithm algorithm = Algorithm::TWF;
  SparseConfig sparse;
  PGDConfig pgd;
  PriorSpec prior;
  PgdInit init = PgdInit::Flat;
  /// When set, w0 = c x/||x|| + sqrt(1 - c^2) u with u a random unit vector
  /// orthogonal to x; otherwise w0 = o_1.
  std::optional<double> w0_correlation;
  bool normalize_signal = false;
  double success_threshold = kDefaultSuccessThreshold;
  std::optional<std::size_t> memory_budget_bytes;
  std::uint64_t trial_seed = 0;

  void validate() const {
    if (n < 1 || m < 1) throw std::invalid_argument("trial needs n >= 1 and m >= 1");
    const bool sparse_algo = is_sparse(algorithm);
    const bool sparse_prior = prior.kind == PriorKind::Sparse;
    if (sparse_algo != sparse_prior) {
      throw std::invalid_argument(std::string("algorithm ") + to_string(algorithm) +
                                  " does not match prior " + to_string(prior.kind));
    }
    if (sparse_prior) {
      if (k > n) throw std::invalid_argument("sparsity k exceeds n");
      sparse.validate();
    } else {
      if (k < 1 || k > n) throw std::invalid_argument("latent dimension must satisfy 1 <= k <= n");
      pgd.validate();
      prior.projection.validate();
      if (w0_correlation && !(*w0_correlation > 0.0 && *w0_correlation <= 1.0)) {
        throw std::invalid_argument("w0_correlation must lie in (0, 1]");
      }
    }
  }
};

struct TrialRecord {
  Index n = 0, k = 0, m = 0;
  Algorithm algorithm = Algorithm::TWF;
  std::uint64_t trial_seed = 0;
  double rel_dist = std::numeric_limits<double>::quiet_NaN();
  double cosine = std::numeric_limits<double>::quiet_NaN();
  bool success = false;
  Index iterations = 0;
  double wall_time_ms = 0.0;
  std::string status;  // completed | early_stopped | diverged | failed
  std::string message;
};

/// k-sparse signal: uniform random support, nonzeros i.i.d. Uniform(-0.5, 0.5).
inline Signal sample_sparse_signal(Index n, Index k, std::uint64_t seed, bool normalize = false) {
  if (k > n) throw std::invalid_argument("sample_sparse_signal: k > n");
  CounterStream s(seed, 0);
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index j = 0; j < k; ++j) std::swap(perm[j], perm[j + s.below(n - j)]);
  std::sort(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  Vector x = Vector::Zero(static_cast<Eigen::Index>(n));
  for (Index j = 0; j < k; ++j) x[static_cast<Eigen::Index>(perm[j])] = s.uniform() - 0.5;
  if (normalize && x.norm() > 0.0) x /= x.norm();
  return {std::move(x), k};
}

/// A point of the model's range. Subspace: W u with u a uniform unit vector
/// (unit norm; needs r >= 1). ReLU decoder: decode(z), z uniform in the ball.
inline Vector sample_generative_signal(const GenerativeModel& model, std::uint64_t seed) {
  CounterStream s(seed, 0);
  if (const auto* sub = dynamic_cast<const SubspaceModel*>(&model)) {
    if (sub->radius() < 1.0) throw std::invalid_argument("subspace signal needs radius >= 1");
    Vector u(static_cast<Eigen::Index>(sub->k()));
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = s.normal();
    return sub->decode(u / u.norm());
  }
  return model.decode(uniform_in_ball(model.k(), model.radius(), s));
}

/// c x/||x|| + sqrt(1 - c^2) u, u a uniform unit vector orthogonal to x.
inline Vector correlated_unit_vector(const Vector& x, double c, std::uint64_t seed) {
  const Vector xhat = x / x.norm();
  CounterStream s(seed, 0);
  Vector u(x.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = s.normal();
  u -= xhat.dot(u) * xhat;
  if (u.norm() == 0.0) return xhat;
  u /= u.norm();
  Vector w = c * xhat + std::sqrt(std::max(0.0, 1.0 - c * c)) * u;
  return w / w.norm();
}

inline std::unique_ptr<GenerativeModel> make_model(const PriorSpec& prior, Index n, Index k) {
  switch (prior.kind) {
    case PriorKind::Subspace:
      return std::make_unique<SubspaceModel>(
          SubspaceModel::sample(n, k, prior.radius, prior.seed, prior.normalize));
    case PriorKind::ReluDecoder:
      return std::make_unique<ReluDecoderModel>(ReluDecoderModel::sample(
          n, prior.hidden, k, prior.radius, prior.seed, prior.normalize, prior.projection));
    case PriorKind::Sparse:
      break;
  }
  throw std::invalid_argument("make_model: sparse prior has no generative model");
}

/// The simulated problem of a trial: signal, ensemble, observations.
inline MeasurementSet simulate_trial(const TrialSpec& spec, const GenerativeModel* model) {
  Vector x = model ? sample_generative_signal(*model, derive_seed(spec.trial_seed, 1))
                   : sample_sparse_signal(spec.n, spec.k, derive_seed(spec.trial_seed, 1),
                                          spec.normalize_signal)
                         .values;
  auto ensemble = MeasurementEnsemble::sample(spec.n, spec.m, derive_seed(spec.trial_seed, 2),
                                              spec.memory_budget_bytes);
  return MeasurementSet::simulate(std::move(ensemble), x);
}

/// Runs the spec's algorithm on an existing set.
inline RecoveryResult run_algorithm(const TrialSpec& spec, const MeasurementSet& set,
                                    const GenerativeModel* model) {
  switch (spec.algorithm) {
    case Algorithm::WF: {
      SparseConfig cfg = spec.sparse;
      cfg.beta = BetaSchedule::constant(0.0);
      return solve_twf(set, cfg);
    }
    case Algorithm::TWF:
      return solve_twf(set, spec.sparse);
    default:
      break;
  }
  if (!model) throw std::invalid_argument("generative algorithm without a model");
  Vector w0 = spec.w0_correlation && set.truth
                  ? correlated_unit_vector(*set.truth, *spec.w0_correlation,
                                           derive_seed(spec.trial_seed, 4))
                  : default_w0(set.n());
  PGDConfig pgd = spec.pgd;
  if (!pgd.inner) {
    pgd.inner = model->projection_config();
    pgd.inner->restart_seed = derive_seed(spec.trial_seed, 5);
  }
  auto power = [&] {
    RecoveryResult r;
    PowerResult p = projected_power(set, *model, w0);
    r.estimate = std::move(p.estimate);
    r.iterations = 1;
    r.message = std::move(p.warning);
    return r;
  };
  if (spec.algorithm == Algorithm::PPower) return power();
  const bool from_power = spec.algorithm == Algorithm::PPowerThenPGD || spec.init == PgdInit::PPower;
  const Vector x0 = from_power ? power().estimate : w0;
  return solve_pgd(set, *model, x0, pgd);
}

inline TrialRecord make_record(const TrialSpec& spec) {
  TrialRecord rec;
  rec.n = spec.n;
  rec.k = spec.k;
  rec.m = spec.m;
  rec.algorithm = spec.algorithm;
  rec.trial_seed = spec.trial_seed;
  return rec;
}

/// Fills metrics from a finished run. Sparse track: sign-invariant relative
/// distance; generative track: signed.
inline void score(TrialRecord& rec, const TrialSpec& spec, const MeasurementSet& set,
                  const RecoveryResult& result) {
  rec.iterations = result.iterations;
  rec.status = to_string(result.status);
  rec.message = result.message;
  if (!set.truth || set.truth->norm() == 0.0) return;
  const Vector& x = *set.truth;
  rec.rel_dist = is_sparse(spec.algorithm) ? relative_distance(result.estimate, x)
                                           : signed_relative_distance(result.estimate, x);
  rec.cosine = result.estimate.norm() > 0.0 ? cosine_similarity(result.estimate, x / x.norm()) : 0.0;
  rec.success = result.status != Status::Diverged && rec.rel_dist < spec.success_threshold;
}

/// Simulates and solves one trial. Solver errors become a "failed" record.
inline TrialRecord run_trial(const TrialSpec& spec,
                             std::shared_ptr<const GenerativeModel> model = nullptr) {
  TrialRecord rec = make_record(spec);
  const auto start = std::chrono::steady_clock::now();
  try {
    spec.validate();
    if (!model && spec.prior.kind != PriorKind::Sparse) model = make_model(spec.prior, spec.n, spec.k);
    const MeasurementSet set = simulate_trial(spec, model.get());
    const RecoveryResult result = run_algorithm(spec, set, model.get());
    score(rec, spec, set, result);
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.message = e.what();
    rec.success = false;
  }
  rec.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

/// Runs body(i) for i in [0, count) on up to `workers` threads.
inline void parallel_for(Index count, Index workers, const std::function<void(Index)>& body) {
  workers = std::max<Index>(1, std::min(workers, count));
  if (workers == 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline Index default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

struct CellResult {
  Index k = 0, m = 0;
  Index trials = 0, successes = 0, failures = 0, errored = 0;
  std::vector<TrialRecord> records;

  double success_rate() const {
    return trials == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(trials);
  }
};

/// Runs `trials` trials of `base` at (k, m) with seeds derive_seed(base_seed, k, m, t).
inline CellResult run_cell(const TrialSpec& base, Index k, Index m, Index trials,
                           std::uint64_t base_seed, Index workers = 1) {
  if (trials < 1) throw std::invalid_argument("a grid cell needs trials >= 1");
  CellResult cell;
  cell.k = k;
  cell.m = m;
  cell.trials = trials;
  cell.records.resize(trials);
  std::shared_ptr<const GenerativeModel> model;
  if (base.prior.kind != PriorKind::Sparse) model = make_model(base.prior, base.n, k);
  parallel_for(trials, workers, [&](Index t) {
    TrialSpec spec = base;
    spec.k = k;
    spec.m = m;
    spec.trial_seed = derive_seed(base_seed, k, m, t);
    cell.records[t] = run_trial(spec, model);
  });
  for (const auto& r : cell.records) {
    if (r.status == "failed") {
      ++cell.errored;
    } else if (r.success) {
      ++cell.successes;
    } else {
      ++cell.failures;
    }
  }
  return cell;
}

struct GridResult {
  std::vector<Index> k_values, m_values;
  std::vector<CellResult> cells;  // k-major: cells[ki * m_values.size() + mi]

  const CellResult& at(Index ki, Index mi) const { return cells.at(ki * m_values.size() + mi); }
  double rate(Index ki, Index mi) const { return at(ki, mi).success_rate(); }
};

/// Success-rate grid over k_values x m_values. `load` may supply a finished
/// cell (for resuming); `done` is called after each newly computed cell.
inline GridResult phase_transition_grid(
    const std::vector<Index>& k_values, const std::vector<Index>& m_values, Index trials,
    std::uint64_t base_seed, const TrialSpec& base, Index workers = 1,
    const std::function<std::optional<CellResult>(Index, Index)>& load = {},
    const std::function<void(const CellResult&)>& done = {}) {
  if (k_values.empty() || m_values.empty()) throw std::invalid_argument("grid axes must be non-empty");
  if (trials < 1) throw std::invalid_argument("grid needs trials >= 1");
  GridResult grid{k_values, m_values, {}};
  for (Index k : k_values) {
    for (Index m : m_values) {
      std::optional<CellResult> cell = load ? load(k, m) : std::nullopt;
      if (!cell) {
        cell = run_cell(base, k, m, trials, base_seed, workers);
        if (done) done(*cell);
      }
      grid.cells.push_back(std::move(*cell));
    }
  }
  return grid;
}

/// Linear-interpolation quantile (type 7) of unsorted values.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct SweepRow {
  Index m = 0;
  std::string algo;  // "si" or "si_s"
  double q25 = 0.0, median = 0.0, q75 = 0.0;
};

struct SweepResult {
  std::vector<Index> m_values;  // ascending
  /// distances[mi][t] for the unrestricted and the support-restricted initializer.
  std::vector<std::vector<double>> si, si_s;
  std::vector<SweepRow> rows;
};

/// Both initializers at every m for one trial, from a single pass over the
/// largest ensemble. Ensembles with the same seed are prefixes of each other,
/// so each prefix gives exactly the values of a separate run at that m.
struct PrefixInitializers {
  std::vector<Vector> si, si_s;
};

inline PrefixInitializers prefix_initializers(const MeasurementEnsemble& ensemble, const Vector& x,
                                              const std::vector<Index>& m_values, double alpha) {
  const Index n = ensemble.n();
  const Vector y = forward(ensemble, x);
  std::vector<double> acc(n * n, 0.0);
  PrefixInitializers out;
  Index next = 0;
  auto emit = [&](Index m) {
    const Vector ym = y.head(static_cast<Eigen::Index>(m));
    const double phi = estimate_norm(ym);
    const double md = static_cast<double>(m);
    Matrix s(n, n);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) s(r, c) = acc[r * n + c] / md;
    out.si.push_back(phi * leading_eigenpair(s).vector);
    Vector scores(static_cast<Eigen::Index>(n));
    for (Index l = 0; l < n; ++l) scores[static_cast<Eigen::Index>(l)] = s(l, l);
    const std::vector<Index> support = estimate_support(scores, phi, alpha, n, m);
    const auto k = static_cast<Eigen::Index>(support.size());
    Matrix block(k, k);
    for (Eigen::Index r = 0; r < k; ++r)
      for (Eigen::Index c = 0; c < k; ++c)
        block(r, c) = s(static_cast<Eigen::Index>(support[r]), static_cast<Eigen::Index>(support[c]));
    const EigenPair lead = leading_eigenpair(block);
    Vector x0 = Vector::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index r = 0; r < k; ++r) x0[static_cast<Eigen::Index>(support[r])] = phi * lead.vector[r];
    out.si_s.push_back(std::move(x0));
  };
  ensemble.visit_sym([&](Index i, const double* sym) {
    const double yi = y[static_cast<Eigen::Index>(i)];
    for (Index e = 0; e < n * n; ++e) acc[e] += yi * sym[e];
    while (next < m_values.size() && m_values[next] == i + 1) emit(m_values[next++]);
  });
  return out;
}

/// Relative distance of the standard (SI) and support-restricted (SI-S)
/// spectral initializers over `trials` paired seeds at each m.
inline SweepResult spectral_closeness_sweep(Index n, Index k, std::vector<Index> m_values,
                                            Index trials, std::uint64_t base_seed, double alpha,
                                            Index workers = 1, bool normalize_signal = false) {
  if (m_values.empty() || trials < 1) throw std::invalid_argument("sweep needs m values and trials >= 1");
  std::sort(m_values.begin(), m_values.end());
  m_values.erase(std::unique(m_values.begin(), m_values.end()), m_values.end());
  if (m_values.front() < 1) throw std::invalid_argument("sweep m values must be >= 1");
  SweepResult res;
  res.m_values = m_values;
  res.si.assign(m_values.size(), std::vector<double>(trials));
  res.si_s.assign(m_values.size(), std::vector<double>(trials));
  parallel_for(trials, workers, [&](Index t) {
    const std::uint64_t seed = derive_seed(base_seed, k, t);
    const Vector x = sample_sparse_signal(n, k, derive_seed(seed, 1), normalize_signal).values;
    // Streamed: the single pass does not benefit from stored matrices.
    const auto ensemble = MeasurementEnsemble::sample(n, m_values.back(), derive_seed(seed, 2), 0);
    const PrefixInitializers init = prefix_initializers(ensemble, x, m_values, alpha);
    for (Index mi = 0; mi < m_values.size(); ++mi) {
      res.si[mi][t] = relative_distance(init.si[mi], x);
      res.si_s[mi][t] = relative_distance(init.si_s[mi], x);
    }
  });
  for (Index mi = 0; mi < m_values.size(); ++mi) {
    res.rows.push_back({m_values[mi], "si", quantile(res.si[mi], 0.25), quantile(res.si[mi], 0.5),
                        quantile(res.si[mi], 0.75)});
    res.rows.push_back({m_values[mi], "si_s", quantile(res.si_s[mi], 0.25),
                        quantile(res.si_s[mi], 0.5), quantile(res.si_s[mi], 0.75)});
  }
  return res;
}

}  // namespace quadrec
