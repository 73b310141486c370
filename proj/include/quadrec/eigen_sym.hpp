#pragma once

// Leading eigenpair of a real symmetric matrix.

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>

#include "quadrec/errors.hpp"

namespace quadrec {

struct EigenPair {
  double value = 0.0;
  Vector vector;
  int sweeps = 0;
};

/// Flips v so that its largest-magnitude entry is positive (lowest index on ties).
inline void normalize_sign(Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < v.size(); ++j)
    if (std::abs(v[j]) > std::abs(v[best])) best = j;
  if (v.size() > 0 && v[best] < 0) v = -v;
}

struct JacobiOptions {
  double tolerance = 1e-12;  // off-diagonal Frobenius norm relative to the total
  int max_sweeps = 100;
};

/// Cyclic Jacobi. Returns the eigenpair for the algebraically largest
/// eigenvalue (lowest index on ties), unit length, sign-normalized.
inline EigenPair jacobi_leading(const Matrix& input, JacobiOptions opt = {}) {
  const Eigen::Index n = input.rows();
  if (input.cols() != n) throw DimensionError("jacobi_leading: matrix is not square");
  if (n == 0) throw DimensionError("jacobi_leading: empty matrix");
  Matrix a = input;
  Matrix v = Matrix::Identity(n, n);

  auto off_norm2 = [&] {
    double s = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
    return s;
  };
  const double total2 = a.squaredNorm();

  int sweeps = 0;
  while (off_norm2() > opt.tolerance * opt.tolerance * total2) {
    if (sweeps == opt.max_sweeps) {
      throw EigenSolverError("jacobi_leading: no convergence after " +
                             std::to_string(opt.max_sweeps) + " sweeps");
    }
    ++sweeps;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index r = 0; r < n; ++r) {
          const double arp = a(r, p), arq = a(r, q);
          a(r, p) = c * arp - s * arq;
          a(r, q) = s * arp + c * arq;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
          const double apr = a(p, r), aqr = a(q, r);
          a(p, r) = c * apr - s * aqr;
          a(q, r) = s * apr + c * aqr;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index r = 0; r < n; ++r) {
          const double vrp = v(r, p), vrq = v(r, q);
          v(r, p) = c * vrp - s * vrq;
          v(r, q) = s * vrp + c * vrq;
        }
      }
    }
  }

  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < n; ++j)
    if (a(j, j) > a(best, best)) best = j;
  EigenPair out{a(best, best), v.col(best).normalized(), sweeps};
  normalize_sign(out.vector);
  return out;
}

/// Householder tridiagonalization + implicit QR (Eigen). Used for large dense
/// matrices where Jacobi sweeps are too slow.
inline EigenPair dense_leading(const Matrix& input) {
  if (input.rows() != input.cols()) throw DimensionError("dense_leading: matrix is not square");
  if (input.rows() == 0) throw DimensionError("dense_leading: empty matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(input);
  if (solver.info() != Eigen::Success) {
    throw EigenSolverError("dense_leading: symmetric QR did not converge");
  }
  const Eigen::Index last = input.rows() - 1;  // eigenvalues ascend
  EigenPair out{solver.eigenvalues()[last], solver.eigenvectors().col(last), 0};
  normalize_sign(out.vector);
  return out;
}

inline constexpr Eigen::Index kJacobiMaxDim = 128;

/// Jacobi up to kJacobiMaxDim, dense QR above.
inline EigenPair leading_eigenpair(const Matrix& a) {
  return a.rows() <= kJacobiMaxDim ? jacobi_leading(a) : dense_leading(a);
}

}  // namespace quadrec
