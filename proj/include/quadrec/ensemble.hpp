#pragma once

// Gaussian measurement ensembles {A_i}, the quadratic forward model
// y_i = x^T A_i x, and the spectral data matrix (1/m) sum_i y_i Ã_i with
// Ã_i = (A_i + A_i^T) / 2.
//
// Entry (row, col) of A_i is a standard normal drawn from Philox4x32-10 with
// key = seed and counter = (i_lo, i_hi, row, col / 2); the two Box–Muller
// outputs of that block are the entries at columns 2*(col/2) and 2*(col/2)+1.
// Matrices are therefore regenerable one at a time, one row at a time, or one
// entry at a time, and A_i of an (n, m) ensemble is the leading n x n block of
// A_i in any larger ensemble with the same seed.
//
// Indices are 0-based: matrix i is in [0, m).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadrec/errors.hpp"
#include "quadrec/normal.hpp"
#include "quadrec/philox.hpp"

namespace quadrec {

enum class Storage { Materialized, Streamed };

inline const char* to_string(Storage s) noexcept {
  return s == Storage::Materialized ? "materialized" : "streamed";
}

inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{2} << 30;  // 2 GiB

namespace detail {

inline constexpr std::size_t kRowBlock = 32;

/// Raw row `row` of A_i, length n.
inline void generate_raw_row(PhiloxKey key, std::uint64_t i, std::uint32_t row, Index n,
                             double* out) {
  const auto i_lo = static_cast<std::uint32_t>(i);
  const auto i_hi = static_cast<std::uint32_t>(i >> 32);
  const Index pairs = (n + 1) / 2;
  double g0[kRowBlock], g1[kRowBlock];
  for (Index p0 = 0; p0 < pairs; p0 += kRowBlock) {
    normal_pairs_block<kRowBlock>(i_lo, i_hi, row, static_cast<std::uint32_t>(p0), key, g0, g1);
    const Index count = std::min(kRowBlock, pairs - p0);
    for (Index j = 0; j < count; ++j) {
      const Index col = 2 * (p0 + j);
      out[col] = g0[j];
      if (col + 1 < n) out[col + 1] = g1[j];
    }
  }
}

inline double generate_raw_entry(PhiloxKey key, std::uint64_t i, std::uint32_t row,
                                 std::uint32_t col) {
  const auto [g0, g1] = normal_pair({static_cast<std::uint32_t>(i),
                                     static_cast<std::uint32_t>(i >> 32), row, col >> 1},
                                    key);
  return (col & 1u) ? g1 : g0;
}

inline std::size_t checked_mul(std::size_t a, std::size_t b) {
  std::size_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) {
    throw DimensionError("ensemble size overflows the addressable index range");
  }
  return r;
}

}  // namespace detail

/// The m matrices A_1..A_m, represented by (n, m, seed). Immutable; copies
/// share storage, so an ensemble can be handed to many threads.
class MeasurementEnsemble {
 public:
  /// Materialized iff m * n^2 * 8 bytes <= budget (default 2 GiB).
  static MeasurementEnsemble sample(Index n, Index m, std::uint64_t seed,
                                    std::optional<std::size_t> memory_budget_bytes = {}) {
    if (n < 1 || m < 1) throw std::invalid_argument("ensemble requires n >= 1 and m >= 1");
    if (n > std::numeric_limits<std::uint32_t>::max()) {
      throw DimensionError("ensemble dimension n exceeds 2^32 - 1");
    }
    const std::size_t entries = detail::checked_mul(m, detail::checked_mul(n, n));
    const std::size_t bytes = detail::checked_mul(entries, sizeof(double));
    const std::size_t budget = memory_budget_bytes.value_or(kDefaultMemoryBudget);

    MeasurementEnsemble e;
    e.n_ = n;
    e.m_ = m;
    e.seed_ = seed;
    e.key_ = make_key(seed);
    e.storage_ = bytes <= budget ? Storage::Materialized : Storage::Streamed;
    if (e.storage_ == Storage::Materialized) {
      auto data = std::make_shared<std::vector<double>>(entries);
      std::vector<double> raw(n * n);
      for (Index i = 0; i < m; ++i) {
        e.generate_raw(i, raw.data());
        symmetrize(raw.data(), n, data->data() + i * n * n);
      }
      e.sym_ = std::move(data);
    }
    return e;
  }

  /// Explicit matrices instead of Gaussian draws. For tests and oracles only:
  /// the Gaussian contract does not hold and seed() is meaningless.
  static MeasurementEnsemble injected(const std::vector<Matrix>& matrices) {
    if (matrices.empty()) throw std::invalid_argument("injected ensemble needs m >= 1");
    const Index n = static_cast<Index>(matrices.front().rows());
    if (n < 1) throw std::invalid_argument("injected ensemble needs n >= 1");
    MeasurementEnsemble e;
    e.n_ = n;
    e.m_ = matrices.size();
    e.storage_ = Storage::Materialized;
    auto raw = std::make_shared<std::vector<double>>(e.m_ * n * n);
    auto sym = std::make_shared<std::vector<double>>(e.m_ * n * n);
    for (Index i = 0; i < e.m_; ++i) {
      const Matrix& a = matrices[i];
      if (static_cast<Index>(a.rows()) != n || static_cast<Index>(a.cols()) != n) {
        throw DimensionError("injected matrices must all be n x n");
      }
      double* dst = raw->data() + i * n * n;
      for (Index r = 0; r < n; ++r)
        for (Index c = 0; c < n; ++c) dst[r * n + c] = a(r, c);
      symmetrize(dst, n, sym->data() + i * n * n);
    }
    e.raw_ = std::move(raw);
    e.sym_ = std::move(sym);
    return e;
  }

  Index n() const noexcept { return n_; }
  Index m() const noexcept { return m_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Storage storage() const noexcept { return storage_; }
  bool is_injected() const noexcept { return raw_ != nullptr; }

  /// Raw entry a^{(i)}_{row,col}.
  double entry(Index i, Index row, Index col) const {
    check_index(i);
    if (row >= n_ || col >= n_) throw IndexError("matrix entry out of range");
    if (raw_) return (*raw_)[i * n_ * n_ + row * n_ + col];
    return detail::generate_raw_entry(key_, i, static_cast<std::uint32_t>(row),
                                      static_cast<std::uint32_t>(col));
  }

  /// Raw A_i.
  Matrix matrix(Index i) const {
    check_index(i);
    std::vector<double> raw(n_ * n_);
    generate_raw(i, raw.data());
    Matrix a(n_, n_);
    for (Index r = 0; r < n_; ++r)
      for (Index c = 0; c < n_; ++c) a(r, c) = raw[r * n_ + c];
    return a;
  }

  /// Ã_i = (A_i + A_i^T) / 2.
  Matrix sym_matrix(Index i) const {
    check_index(i);
    Matrix s(n_, n_);
    visit_one(i, [&](const double* sym) {
      for (Index r = 0; r < n_; ++r)
        for (Index c = 0; c < n_; ++c) s(r, c) = sym[r * n_ + c];
    });
    return s;
  }

  /// Ã_i z without forming Ã_i in streamed mode.
  Vector sym_apply(Index i, const Vector& z) const {
    check_index(i);
    require_length(z, n_, "sym_apply");
    const std::vector<Index> cols = support_of(z);
    Vector u = Vector::Zero(static_cast<Eigen::Index>(n_));
    std::vector<const double*> rows(cols.size());
    sym_rows_of(i, cols, rows);
    accumulate_rows(rows, cols, z, u.data());
    return u;
  }

  /// Calls f(i, rows) for i = 0..m-1 in order, where rows[r] points at row
  /// `row_ids[r]` of Ã_i (length n). Pointers are valid only during the call.
  template <typename F>
  void visit_sym_rows(std::span<const Index> row_ids, F&& f) const {
    std::vector<const double*> rows(row_ids.size());
    for (Index i = 0; i < m_; ++i) {
      sym_rows_of(i, row_ids, rows);
      f(i, std::span<const double* const>(rows));
    }
  }

  /// Calls f(i, block) for i = 0..m-1 in order, where block is the row-major
  /// |ids| x |ids| restriction of Ã_i to ids x ids.
  template <typename F>
  void visit_sym_block(std::span<const Index> ids, F&& f) const {
    const Index k = ids.size();
    std::vector<double> block(k * k);
    for (Index i = 0; i < m_; ++i) {
      sym_block_of(i, ids, block.data());
      f(i, std::span<const double>(block));
    }
  }

  /// Calls f(i, diag) with the diagonal a^{(i)}_{ll}, l = 0..n-1.
  template <typename F>
  void visit_diagonal(F&& f) const {
    std::vector<double> diag(n_);
    for (Index i = 0; i < m_; ++i) {
      if (sym_) {
        const double* s = sym_->data() + i * n_ * n_;
        for (Index l = 0; l < n_; ++l) diag[l] = s[l * n_ + l];
      } else {
        for (Index l = 0; l < n_; ++l)
          diag[l] = detail::generate_raw_entry(key_, i, static_cast<std::uint32_t>(l),
                                               static_cast<std::uint32_t>(l));
      }
      f(i, std::span<const double>(diag));
    }
  }

  /// Calls f(i, sym) with the full row-major Ã_i, i = 0..m-1.
  template <typename F>
  void visit_sym(F&& f) const {
    for (Index i = 0; i < m_; ++i) visit_one(i, [&](const double* s) { f(i, s); });
  }

  /// Indices of the nonzero entries of z, ascending.
  static std::vector<Index> support_of(const Vector& z) {
    std::vector<Index> s;
    for (Eigen::Index j = 0; j < z.size(); ++j)
      if (z[j] != 0.0) s.push_back(static_cast<Index>(j));
    return s;
  }

  /// u[j] += sum_r z[cols[r]] * rows[r][j], accumulated in r order for every j.
  /// This is the single Ã_i z kernel behind sym_apply, forward and the gradient.
  static void accumulate_rows(std::span<const double* const> rows, std::span<const Index> cols,
                              const Vector& z, double* u) {
    const Index n = static_cast<Index>(z.size());
    for (Index r = 0; r < cols.size(); ++r) {
      const double zl = z[static_cast<Eigen::Index>(cols[r])];
      const double* row = rows[r];
      for (Index j = 0; j < n; ++j) u[j] += zl * row[j];
    }
  }

 private:
  MeasurementEnsemble() = default;

  void check_index(Index i) const {
    if (i >= m_) {
      throw IndexError("measurement index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(m_) + ")");
    }
  }

  static void symmetrize(const double* raw, Index n, double* sym) {
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < n; ++c) sym[r * n + c] = 0.5 * (raw[r * n + c] + raw[c * n + r]);
  }

  void generate_raw(Index i, double* out) const {
    if (raw_) {
      std::copy_n(raw_->data() + i * n_ * n_, n_ * n_, out);
      return;
    }
    for (Index r = 0; r < n_; ++r)
      detail::generate_raw_row(key_, i, static_cast<std::uint32_t>(r), n_, out + r * n_);
  }

  template <typename F>
  void visit_one(Index i, F&& f) const {
    if (sym_) {
      f(sym_->data() + i * n_ * n_);
      return;
    }
    thread_local std::vector<double> raw, sym;
    raw.resize(n_ * n_);
    sym.resize(n_ * n_);
    generate_raw(i, raw.data());
    symmetrize(raw.data(), n_, sym.data());
    f(static_cast<const double*>(sym.data()));
  }

  void sym_rows_of(Index i, std::span<const Index> row_ids,
                   std::vector<const double*>& rows) const {
    if (sym_) {
      const double* s = sym_->data() + i * n_ * n_;
      for (Index r = 0; r < row_ids.size(); ++r) rows[r] = s + row_ids[r] * n_;
      return;
    }
    thread_local std::vector<double> raw, buf;
    if (3 * row_ids.size() >= n_) {
      raw.resize(n_ * n_);
      buf.resize(n_ * n_);
      generate_raw(i, raw.data());
      symmetrize(raw.data(), n_, buf.data());
      for (Index r = 0; r < row_ids.size(); ++r) rows[r] = buf.data() + row_ids[r] * n_;
      return;
    }
    // Row l of Ã_i needs row l and column l of A_i.
    raw.resize(n_);
    buf.resize(row_ids.size() * n_);
    for (Index r = 0; r < row_ids.size(); ++r) {
      const auto l = static_cast<std::uint32_t>(row_ids[r]);
      detail::generate_raw_row(key_, i, l, n_, raw.data());
      double* dst = buf.data() + r * n_;
      for (Index j = 0; j < n_; ++j) {
        const double col_entry = j == l ? raw[j]
                                        : detail::generate_raw_entry(
                                              key_, i, static_cast<std::uint32_t>(j), l);
        dst[j] = 0.5 * (raw[j] + col_entry);
      }
      rows[r] = dst;
    }
  }

  void sym_block_of(Index i, std::span<const Index> ids, double* out) const {
    const Index k = ids.size();
    if (sym_) {
      const double* s = sym_->data() + i * n_ * n_;
      for (Index r = 0; r < k; ++r)
        for (Index c = 0; c < k; ++c) out[r * k + c] = s[ids[r] * n_ + ids[c]];
      return;
    }
    if (2 * k >= n_) {
      visit_one(i, [&](const double* s) {
        for (Index r = 0; r < k; ++r)
          for (Index c = 0; c < k; ++c) out[r * k + c] = s[ids[r] * n_ + ids[c]];
      });
      return;
    }
    for (Index r = 0; r < k; ++r) {
      const auto row = static_cast<std::uint32_t>(ids[r]);
      for (Index c = r; c < k; ++c) {
        const auto col = static_cast<std::uint32_t>(ids[c]);
        const double a = detail::generate_raw_entry(key_, i, row, col);
        const double b = row == col ? a : detail::generate_raw_entry(key_, i, col, row);
        out[r * k + c] = 0.5 * (a + b);
        out[c * k + r] = out[r * k + c];
      }
    }
  }

  Index n_ = 0;
  Index m_ = 0;
  std::uint64_t seed_ = 0;
  PhiloxKey key_{};
  Storage storage_ = Storage::Streamed;
  std::shared_ptr<const std::vector<double>> sym_;  // Ã_i, row-major, when materialized
  std::shared_ptr<const std::vector<double>> raw_;  // A_i, injected ensembles only
};

/// The theory assumes m = O(n). Sizes with m > 10 n are allowed but flagged.
inline std::optional<std::string> measurement_ratio_warning(Index n, Index m) {
  if (m <= 10 * n) return std::nullopt;
  return "m = " + std::to_string(m) + " exceeds 10 n = " + std::to_string(10 * n) +
         "; the guarantees assume m = O(n)";
}

/// A signal with an optional sparsity hint.
struct Signal {
  Vector values;
  std::optional<Index> sparsity;

  /// Throws if the hint is present and violated.
  void validate() const {
    if (!sparsity) return;
    const Index nnz = static_cast<Index>((values.array() != 0.0).count());
    if (nnz > *sparsity) {
      throw std::invalid_argument("signal has " + std::to_string(nnz) +
                                  " nonzeros, more than its sparsity hint " +
                                  std::to_string(*sparsity));
    }
  }
};

/// y_i = x^T A_i x for every i. Only the |supp x|^2 block of each matrix is
/// touched, so sparse signals are cheap on streamed ensembles.
inline Vector forward(const MeasurementEnsemble& ensemble, const Vector& x) {
  require_length(x, ensemble.n(), "forward");
  const std::vector<Index> s = MeasurementEnsemble::support_of(x);
  const Index k = s.size();
  Vector y = Vector::Zero(static_cast<Eigen::Index>(ensemble.m()));
  if (k == 0) return y;
  std::vector<double> xs(k), u(k);
  for (Index r = 0; r < k; ++r) xs[r] = x[static_cast<Eigen::Index>(s[r])];
  ensemble.visit_sym_block(s, [&](Index i, std::span<const double> block) {
    // Same accumulation order as accumulate_rows restricted to supp x.
    std::fill(u.begin(), u.end(), 0.0);
    for (Index r = 0; r < k; ++r) {
      const double* row = block.data() + r * k;
      for (Index c = 0; c < k; ++c) u[c] += xs[r] * row[c];
    }
    double q = 0.0;
    for (Index c = 0; c < k; ++c) q += xs[c] * u[c];
    y[static_cast<Eigen::Index>(i)] = q;
  });
  return y;
}

/// An ensemble with its observations and, for simulated data, the truth.
struct MeasurementSet {
  MeasurementEnsemble ensemble;
  Vector y;
  std::optional<Vector> truth;

  MeasurementSet(MeasurementEnsemble e, Vector obs, std::optional<Vector> x = std::nullopt)
      : ensemble(std::move(e)), y(std::move(obs)), truth(std::move(x)) {
    require_length(y, ensemble.m(), "measurement set y");
    if (truth) require_length(*truth, ensemble.n(), "measurement set truth");
  }

  /// Noiseless simulation: y = forward(ensemble, x).
  static MeasurementSet simulate(MeasurementEnsemble e, const Vector& x) {
    Vector y = forward(e, x);
    return MeasurementSet(std::move(e), std::move(y), x);
  }

  Index n() const noexcept { return ensemble.n(); }
  Index m() const noexcept { return ensemble.m(); }
};

/// Ã_in = (1/m) sum_i y_i Ã_i restricted to ids x ids (row-major |ids|^2).
/// Entries equal the matching entries of data_matrix bit for bit.
inline Matrix data_block(const MeasurementSet& set, std::span<const Index> ids) {
  const Index k = ids.size();
  std::vector<double> acc(k * k, 0.0);
  set.ensemble.visit_sym_block(ids, [&](Index i, std::span<const double> block) {
    const double yi = set.y[static_cast<Eigen::Index>(i)];
    for (Index e = 0; e < k * k; ++e) acc[e] += yi * block[e];
  });
  const double m = static_cast<double>(set.m());
  Matrix out(k, k);
  for (Index r = 0; r < k; ++r)
    for (Index c = 0; c < k; ++c) out(r, c) = acc[r * k + c] / m;
  return out;
}

/// (1/m) sum_i y_i Ã_i w without forming the data matrix.
inline Vector data_apply(const MeasurementSet& set, const Vector& w) {
  require_length(w, set.n(), "data_apply");
  const Index n = set.n();
  const std::vector<Index> cols = MeasurementEnsemble::support_of(w);
  std::vector<double> acc(n, 0.0), u(n);
  set.ensemble.visit_sym_rows(cols, [&](Index i, std::span<const double* const> rows) {
    std::fill(u.begin(), u.end(), 0.0);
    MeasurementEnsemble::accumulate_rows(rows, cols, w, u.data());
    const double yi = set.y[static_cast<Eigen::Index>(i)];
    for (Index j = 0; j < n; ++j) acc[j] += yi * u[j];
  });
  Vector out(static_cast<Eigen::Index>(n));
  const double m = static_cast<double>(set.m());
  for (Index j = 0; j < n; ++j) out[static_cast<Eigen::Index>(j)] = acc[j] / m;
  return out;
}

/// The symmetric spectral data matrix (1/m) sum_i y_i Ã_i.
inline Matrix data_matrix(const MeasurementSet& set) {
  const Index n = set.n();
  std::vector<double> acc(n * n, 0.0);
  set.ensemble.visit_sym([&](Index i, const double* s) {
    const double yi = set.y[static_cast<Eigen::Index>(i)];
    for (Index e = 0; e < n * n; ++e) acc[e] += yi * s[e];
  });
  const double m = static_cast<double>(set.m());
  Matrix out(n, n);
  for (Index r = 0; r < n; ++r)
    for (Index c = 0; c < n; ++c) out(r, c) = acc[r * n + c] / m;
  return out;
}

}  // namespace quadrec
