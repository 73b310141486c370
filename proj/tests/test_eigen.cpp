#include <gtest/gtest.h>

#include <cmath>

#include "quadrec/eigen_sym.hpp"
#include "quadrec/normal.hpp"

using namespace quadrec;

namespace {

Matrix random_symmetric(Eigen::Index n, std::uint64_t seed) {
  CounterStream s(seed, 0);
  Matrix a(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) a(r, c) = s.normal();
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST(Jacobi, DiagonalPicksLargestEntry) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 1.0;
  const EigenPair p = jacobi_leading(a);
  EXPECT_EQ(p.value, 2.0);
  EXPECT_EQ(p.vector, Vector::Unit(2, 0));
  EXPECT_EQ(p.sweeps, 0);
}

TEST(Jacobi, OneByOne) {
  Matrix a(1, 1);
  a(0, 0) = -3.0;
  const EigenPair p = jacobi_leading(a);
  EXPECT_EQ(p.value, -3.0);
  EXPECT_EQ(p.vector[0], 1.0);
}

TEST(Jacobi, AlgebraicallyLargestNotLargestMagnitude) {
  Matrix a = Matrix::Zero(3, 3);
  a.diagonal() << -5.0, 1.0, 0.5;
  EXPECT_EQ(jacobi_leading(a).vector, Vector::Unit(3, 1));
}

TEST(Jacobi, TiesGoToLowestIndex) {
  const EigenPair p = jacobi_leading(Matrix::Identity(3, 3));
  EXPECT_EQ(p.vector, Vector::Unit(3, 0));
}

TEST(Jacobi, AgreesWithSelfAdjointSolver) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix a = random_symmetric(12, seed);
    const EigenPair j = jacobi_leading(a);
    const EigenPair d = dense_leading(a);
    EXPECT_NEAR(j.value, d.value, 1e-11);
    EXPECT_LE((j.vector - d.vector).norm(), 1e-9);
    EXPECT_NEAR(j.vector.norm(), 1.0, 1e-14);
    EXPECT_LE((a * j.vector - j.value * j.vector).norm(), 1e-10);
  }
}

TEST(Jacobi, SweepCapIsReported) {
  const Matrix a = random_symmetric(6, 3);
  EXPECT_THROW(jacobi_leading(a, {1e-12, 1}), EigenSolverError);
}

TEST(Jacobi, RejectsNonSquare) {
  EXPECT_THROW(jacobi_leading(Matrix::Zero(2, 3)), DimensionError);
  EXPECT_THROW(jacobi_leading(Matrix(0, 0)), DimensionError);
}

TEST(Jacobi, Deterministic) {
  const Matrix a = random_symmetric(20, 8);
  const EigenPair p = jacobi_leading(a), q = jacobi_leading(a);
  EXPECT_EQ(p.vector, q.vector);
  EXPECT_EQ(p.value, q.value);
}

TEST(SignConvention, LargestMagnitudePositive) {
  Vector v(3);
  v << 0.2, -0.9, 0.3;
  normalize_sign(v);
  EXPECT_GT(v[1], 0.0);
  Vector tie(2);
  tie << -0.5, 0.5;
  normalize_sign(tie);
  EXPECT_EQ(tie[0], 0.5);
}

TEST(Dispatch, UsesDenseSolverAboveThreshold) {
  const Matrix a = random_symmetric(kJacobiMaxDim + 2, 4);
  const EigenPair p = leading_eigenpair(a);
  EXPECT_EQ(p.sweeps, 0);
  EXPECT_LE((a * p.vector - p.value * p.vector).norm(), 1e-9);
}
