#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "quadrec/ensemble.hpp"
#include "quadrec/harness.hpp"
#include "quadrec/oracle.hpp"

using namespace quadrec;

namespace {

Vector uniform_signal(Index n, std::uint64_t seed) {
  CounterStream s(seed, 0);
  Vector x(static_cast<Eigen::Index>(n));
  for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = s.uniform() - 0.5;
  return x;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) a(r, c++) = v;
    ++r;
  }
  return a;
}

constexpr std::size_t kNoBudget = 0;

}  // namespace

TEST(Sample, RegenerationIsIdentical) {
  const auto e = MeasurementEnsemble::sample(2, 1, 7);
  EXPECT_EQ(e.matrix(0), e.matrix(0));
  const auto again = MeasurementEnsemble::sample(2, 1, 7);
  EXPECT_EQ(e.matrix(0), again.matrix(0));
}

TEST(Sample, StorageFollowsBudget) {
  EXPECT_EQ(MeasurementEnsemble::sample(100, 200, 1, std::size_t{2} << 30).storage(),
            Storage::Materialized);
  // 500 * 500^2 * 8 bytes = 1 GB > 256 MiB. Streamed ensembles cost nothing to build.
  EXPECT_EQ(MeasurementEnsemble::sample(500, 500, 1, std::size_t{256} << 20).storage(),
            Storage::Streamed);
  EXPECT_EQ(MeasurementEnsemble::sample(100, 200, 1).storage(), Storage::Materialized);
}

TEST(Sample, BudgetBoundaryIsInclusive) {
  const std::size_t exact = 3 * 4 * 4 * sizeof(double);
  EXPECT_EQ(MeasurementEnsemble::sample(4, 3, 1, exact).storage(), Storage::Materialized);
  EXPECT_EQ(MeasurementEnsemble::sample(4, 3, 1, exact - 1).storage(), Storage::Streamed);
}

TEST(Sample, RejectsBadDimensions) {
  EXPECT_THROW(MeasurementEnsemble::sample(0, 3, 1), std::invalid_argument);
  EXPECT_THROW(MeasurementEnsemble::sample(3, 0, 1), std::invalid_argument);
  const Index huge = Index{1} << 40;
  EXPECT_THROW(MeasurementEnsemble::sample(Index{1} << 31, huge, 1, kNoBudget), DimensionError);
}

TEST(Sample, StorageModesAgreeBitForBit) {
  const auto mat_e = MeasurementEnsemble::sample(7, 5, 99);
  const auto str_e = MeasurementEnsemble::sample(7, 5, 99, kNoBudget);
  ASSERT_EQ(mat_e.storage(), Storage::Materialized);
  ASSERT_EQ(str_e.storage(), Storage::Streamed);
  for (Index i = 0; i < 5; ++i) {
    EXPECT_EQ(mat_e.matrix(i), str_e.matrix(i));
    EXPECT_EQ(mat_e.sym_matrix(i), str_e.sym_matrix(i));
    for (Index r = 0; r < 7; ++r)
      for (Index c = 0; c < 7; ++c) EXPECT_EQ(mat_e.entry(i, r, c), str_e.matrix(i)(r, c));
  }
  const Vector x = uniform_signal(7, 3);
  EXPECT_EQ(forward(mat_e, x), forward(str_e, x));
  for (Index i = 0; i < 5; ++i) EXPECT_EQ(mat_e.sym_apply(i, x), str_e.sym_apply(i, x));
  const MeasurementSet a = MeasurementSet::simulate(mat_e, x), b = MeasurementSet::simulate(str_e, x);
  EXPECT_EQ(data_matrix(a), data_matrix(b));
  EXPECT_EQ(data_apply(a, x), data_apply(b, x));
}

TEST(Sample, SparseRowPathMatchesFullPath) {
  // Few rows take the per-row generation path in streamed mode.
  const auto mat_e = MeasurementEnsemble::sample(40, 3, 5);
  const auto str_e = MeasurementEnsemble::sample(40, 3, 5, kNoBudget);
  Vector z = Vector::Zero(40);
  z[3] = 0.7;
  z[29] = -1.1;
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(mat_e.sym_apply(i, z), str_e.sym_apply(i, z));
  EXPECT_EQ(forward(mat_e, z), forward(str_e, z));
}

TEST(Sample, SmallerEnsemblesArePrefixesAndLeadingBlocks) {
  const auto big = MeasurementEnsemble::sample(9, 6, 17);
  const auto few = MeasurementEnsemble::sample(9, 3, 17);
  const auto small = MeasurementEnsemble::sample(4, 6, 17);
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(few.matrix(i), big.matrix(i));
  for (Index i = 0; i < 6; ++i) EXPECT_EQ(small.matrix(i), big.matrix(i).topLeftCorner(4, 4));
}

TEST(Sample, EntriesLookStandardNormal) {
  const auto e = MeasurementEnsemble::sample(50, 40, 11);
  double sum = 0.0, sum2 = 0.0;
  for (Index i = 0; i < 40; ++i) {
    const Matrix a = e.matrix(i);
    sum += a.sum();
    sum2 += a.squaredNorm();
  }
  const double count = 40.0 * 2500.0;
  EXPECT_NEAR(sum / count, 0.0, 0.02);
  EXPECT_NEAR(sum2 / count, 1.0, 0.02);
}

TEST(Forward, ZeroSignalGivesZero) {
  const auto e = MeasurementEnsemble::sample(6, 4, 1);
  EXPECT_EQ(forward(e, Vector::Zero(6)), Vector::Zero(4));
}

TEST(Forward, IdentityQuadraticForm) {
  const auto e = MeasurementEnsemble::injected({Matrix::Identity(3, 3)});
  Vector x = Vector::Zero(3);
  x[0] = 1.0;
  EXPECT_EQ(forward(e, x)[0], 1.0);
}

TEST(Forward, MatchesTripleLoop) {
  const auto e = MeasurementEnsemble::sample(5, 3, 42);
  const Vector x = uniform_signal(5, 8);
  const Vector y = forward(e, x);
  const Vector ref = brute_force_forward(explicit_matrices(e), x);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(y[i], ref[i], 1e-12 * std::abs(ref[i]));
}

TEST(Forward, ScalesQuadratically) {
  const auto e = MeasurementEnsemble::sample(6, 8, 4);
  const Vector x = uniform_signal(6, 2);
  const Vector y = forward(e, x);
  EXPECT_EQ(forward(e, Vector(-x)), y);
  const Vector y2 = forward(e, Vector(2.0 * x));
  for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(y2[i], 4.0 * y[i], 1e-12 * std::abs(4.0 * y[i]));
}

TEST(Forward, RejectsWrongLength) {
  const auto e = MeasurementEnsemble::sample(4, 2, 1);
  EXPECT_THROW(forward(e, Vector::Zero(3)), DimensionError);
}

TEST(SymApply, ZeroVector) {
  const auto e = MeasurementEnsemble::sample(4, 2, 1);
  EXPECT_EQ(e.sym_apply(1, Vector::Zero(4)), Vector::Zero(4));
}

TEST(SymApply, HandSymmetrization) {
  const auto e = MeasurementEnsemble::injected({mat({{0, 2}, {0, 0}})});
  Vector z(2);
  z << 1, 0;
  const Vector u = e.sym_apply(0, z);
  EXPECT_EQ(u[0], 0.0);
  EXPECT_EQ(u[1], 1.0);
}

TEST(SymApply, MatchesExplicitSymmetrizedMatrix) {
  const auto e = MeasurementEnsemble::sample(6, 2, 3, kNoBudget);
  const Vector z = uniform_signal(6, 9);
  for (Index i = 0; i < 2; ++i) {
    const Matrix a = e.matrix(i);
    const Vector ref = 0.5 * (a + a.transpose()) * z;
    EXPECT_LE((e.sym_apply(i, z) - ref).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SymApply, IndexOutOfRange) {
  const auto e = MeasurementEnsemble::sample(3, 2, 1);
  EXPECT_THROW(e.sym_apply(2, Vector::Zero(3)), IndexError);
  EXPECT_THROW(e.matrix(5), IndexError);
  EXPECT_THROW(e.entry(0, 3, 0), IndexError);
}

TEST(Injected, RejectsMixedSizes) {
  EXPECT_THROW(MeasurementEnsemble::injected({Matrix::Identity(2, 2), Matrix::Identity(3, 3)}),
               DimensionError);
  EXPECT_THROW(MeasurementEnsemble::injected({}), std::invalid_argument);
}

TEST(DataMatrix, ZeroObservations) {
  const auto e = MeasurementEnsemble::sample(4, 5, 1);
  const MeasurementSet set(e, Vector::Zero(5));
  EXPECT_EQ(data_matrix(set), Matrix::Zero(4, 4));
}

TEST(DataMatrix, SingleIdentityTerm) {
  const MeasurementSet set(MeasurementEnsemble::injected({Matrix::Identity(3, 3)}), Vector::Constant(1, 2.0));
  EXPECT_EQ(data_matrix(set), Matrix(2.0 * Matrix::Identity(3, 3)));
}

TEST(DataMatrix, ExactlySymmetric) {
  const auto e = MeasurementEnsemble::sample(8, 30, 6);
  const MeasurementSet set = MeasurementSet::simulate(e, uniform_signal(8, 1));
  const Matrix s = data_matrix(set);
  EXPECT_EQ(s, Matrix(s.transpose()));
}

TEST(DataMatrix, BlockAndApplyAgreeWithFullMatrix) {
  const auto e = MeasurementEnsemble::sample(9, 12, 6, kNoBudget);
  const MeasurementSet set = MeasurementSet::simulate(e, uniform_signal(9, 4));
  const Matrix s = data_matrix(set);
  const std::vector<Index> ids{1, 4, 7};
  const Matrix b = data_block(set, ids);
  for (Index r = 0; r < 3; ++r)
    for (Index c = 0; c < 3; ++c) EXPECT_EQ(b(r, c), s(ids[r], ids[c]));
  const Vector w = uniform_signal(9, 13);
  EXPECT_LE((data_apply(set, w) - s * w).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(DataMatrix, ConcentratesAroundOuterProduct) {
  Vector x = uniform_signal(10, 21);
  x /= x.norm();
  const auto e = MeasurementEnsemble::sample(10, 100000, 31);
  const MeasurementSet set = MeasurementSet::simulate(e, x);
  const Matrix dev = data_matrix(set) - x * x.transpose();
  EXPECT_LE(dev.cwiseAbs().maxCoeff(), 0.05);
}

TEST(MeasurementSet, TruthReproducesObservations) {
  const auto e = MeasurementEnsemble::sample(5, 7, 2);
  const Vector x = uniform_signal(5, 5);
  const MeasurementSet set = MeasurementSet::simulate(e, x);
  EXPECT_EQ(forward(set.ensemble, *set.truth), set.y);
}

TEST(MeasurementSet, RejectsMismatchedLengths) {
  const auto e = MeasurementEnsemble::sample(5, 7, 2);
  EXPECT_THROW(MeasurementSet(e, Vector::Zero(6)), DimensionError);
  EXPECT_THROW(MeasurementSet(e, Vector::Zero(7), Vector(Vector::Zero(4))), DimensionError);
}

TEST(Signal, SparsityHint) {
  Vector v = Vector::Zero(5);
  v[1] = 1.0;
  v[3] = 2.0;
  EXPECT_NO_THROW((Signal{v, 2}).validate());
  EXPECT_THROW((Signal{v, 1}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((Signal{v, std::nullopt}).validate());
}

TEST(RatioWarning, OnlyAboveTenN) {
  EXPECT_FALSE(measurement_ratio_warning(10, 100));
  EXPECT_TRUE(measurement_ratio_warning(10, 101));
}
