#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "unmatched/dense_oracle.hpp"
#include "unmatched/errors.hpp"
#include "unmatched/krylov.hpp"
#include "unmatched/test_problems.hpp"

using namespace unmatched;
using namespace testing_helpers;
using cd = std::complex<double>;

namespace {

Matrix diag(std::initializer_list<double> d) {
  Matrix m = Matrix::Zero(d.size(), d.size());
  Index i = 0;
  for (double v : d) {
    m(i, i) = v;
    ++i;
  }
  return m;
}

// A pair with B A = m.
UnmatchedPair realize(const Matrix& m) {
  return make_dense_pair(m, Matrix::Identity(m.rows(), m.rows()));
}

// Q T Q^T with the leftmost eigenvalue -1 well separated from the rest.
Matrix separated_operator(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 2.0);
  Matrix t = 0.3 * gaussian(n, n, seed + 500) / std::sqrt(static_cast<double>(n));
  t.triangularView<Eigen::StrictlyLower>().setZero();
  t(0, 0) = -1.0;
  for (Index i = 1; i < n; ++i) t(i, i) = uni(rng);
  const Matrix q = gaussian(n, n, seed).householderQr().householderQ();
  return q * t * q.transpose();
}

std::vector<cd> sorted_by_real(std::vector<cd> v) {
  std::sort(v.begin(), v.end(), [](cd a, cd b) { return a.real() < b.real(); });
  return v;
}

}  // namespace

TEST(Arnoldi, FullDimensionRecoversSpectrum) {
  const LinearMap op = make_dense_map(diag({1, 2, 3, 4, 5}));
  const KrylovDecomposition d =
      arnoldi_expand(op, start_decomposition(random_start(5, 3)), 5);
  ASSERT_EQ(d.dim(), 5);
  const auto ev = sorted_by_real(dense_eigenvalues(d.projected));
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(ev[i].real(), i + 1.0, 1e-12);
    EXPECT_NEAR(ev[i].imag(), 0.0, 1e-12);
  }
}

TEST(Arnoldi, EigenvectorStartBreaksDown) {
  const LinearMap op = make_dense_map(diag({1, 2, 3, 4, 5}));
  const KrylovDecomposition d = arnoldi_expand(op, start_decomposition(Vector::Unit(5, 2)), 4);
  EXPECT_EQ(d.dim(), 1);
  EXPECT_TRUE(d.invariant);
  EXPECT_EQ(d.coupling, 0.0);
  EXPECT_NEAR(d.projected(0, 0), 3.0, 1e-15);
}

TEST(Arnoldi, DecompositionIdentityAndOrthogonality) {
  const Matrix m = gaussian(100, 100, 4);
  const LinearMap op = make_dense_map(m);
  const KrylovDecomposition d = arnoldi_expand(op, start_decomposition(random_start(100, 1)), 30);
  ASSERT_EQ(d.dim(), 30);
  // fresh expansion couples through e_l
  EXPECT_EQ(d.coupling_vector, Vector::Unit(30, 29));
  const double hn = d.projected.norm();
  for (Index j = 0; j < 30; ++j) {
    const Vector r = m * d.basis.col(j) - d.basis * d.projected.col(j) -
                     d.coupling * d.coupling_vector[j] * d.next;
    EXPECT_LE(r.norm(), 1e-10 * hn);
    EXPECT_NEAR(decomposition_defect(op, d, j), r.norm(), 1e-10 * hn);
  }
  EXPECT_LE((d.basis.transpose() * d.basis - Matrix::Identity(30, 30)).norm(), 1e-10);
  EXPECT_LE((d.basis.transpose() * d.next).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(d.next.norm(), 1.0, 1e-14);
}

TEST(Arnoldi, RejectsBadTarget) {
  const LinearMap op = make_dense_map(Matrix::Identity(4, 4));
  EXPECT_THROW(arnoldi_expand(op, start_decomposition(Vector::Ones(4)), 5), DomainError);
  EXPECT_THROW(start_decomposition(Vector::Zero(3)), DomainError);
}

TEST(SortedSchur, OrderAndFactorization) {
  const Matrix h = gaussian(12, 12, 9);
  const SortedSchur s = sorted_schur(h);
  const ComplexMatrix hc = h.cast<cd>();
  EXPECT_LE((s.q * s.t * s.q.adjoint() - hc).norm(), 1e-12 * h.norm());
  EXPECT_LE((s.q.adjoint() * s.q - ComplexMatrix::Identity(12, 12)).norm(), 1e-12);
  for (Index i = 0; i + 1 < 12; ++i) {
    EXPECT_LE(s.t(i, i).real(), s.t(i + 1, i + 1).real() + 1e-12);
  }
  const auto ev = sorted_by_real(dense_eigenvalues(h));
  EXPECT_NEAR(s.t(0, 0).real(), ev[0].real(), 1e-10);
}

TEST(SortedSchur, TruncationKeepsIdentityAfterRestarts) {
  const Matrix m = separated_operator(120, 2);
  const LinearMap op = make_dense_map(m);
  KrylovDecomposition d = arnoldi_expand(op, start_decomposition(random_start(120, 5)), 40);
  for (int cycle = 0; cycle < 4; ++cycle) {
    const SortedSchur s = sorted_schur(d.projected);
    d = arnoldi_expand(op, truncate_leftmost(d, s, 20), 40);
    const double hn = d.projected.norm();
    for (Index j = 0; j < d.dim(); ++j) {
      const Vector r = m * d.basis.col(j) - d.basis * d.projected.col(j) -
                       d.coupling * d.coupling_vector[j] * d.next;
      EXPECT_LE(r.norm(), 1e-9 * hn) << "cycle " << cycle << " column " << j;
    }
    EXPECT_LE((d.basis.transpose() * d.basis - Matrix::Identity(d.dim(), d.dim())).norm(), 1e-10);
  }
}

TEST(SortedSchur, TruncationKeepsConjugatePairsTogether) {
  // eigenvalues -1 +- 2i, 1, 3
  Matrix h = Matrix::Zero(4, 4);
  h(0, 0) = -1;
  h(0, 1) = 2;
  h(1, 0) = -2;
  h(1, 1) = -1;
  h(2, 2) = 1;
  h(3, 3) = 3;
  KrylovDecomposition d;
  d.basis = Matrix::Identity(6, 4);
  d.projected = h;
  d.coupling = 0.5;
  d.next = Vector::Unit(6, 4);
  d.coupling_vector = Vector::Ones(4);
  const KrylovDecomposition t = truncate_leftmost(d, sorted_schur(h), 1);
  EXPECT_EQ(t.dim(), 2);
  const auto ev = dense_eigenvalues(t.projected);
  EXPECT_NEAR(std::abs(ev[0].imag()), 2.0, 1e-12);
  EXPECT_NEAR(ev[0].real(), -1.0, 1e-12);
}

TEST(KrylovSchur, DiagonalOperator) {
  Matrix m = Matrix::Zero(10, 10);
  for (int i = 0; i < 10; ++i) m(i, i) = 10 - i;
  EstimatorConfig cfg{3, 6, 1e-8, 200, 4};
  const EigEstimate e = krylov_schur_leftmost(realize(m), cfg);
  ASSERT_TRUE(e.converged);
  EXPECT_NEAR(e.theta.real(), 1.0, 1e-8);
  EXPECT_LE(e.residual, cfg.tol);
  EXPECT_EQ(e.method, EstimateMethod::krylov_schur);
  EXPECT_EQ(e.seed, 4u);
}

TEST(KrylovSchur, AgreesWithDenseOnRandomOperators) {
  EstimatorConfig cfg;
  cfg.tol = 1e-8;
  cfg.max_cycles = 100;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const Matrix m = separated_operator(200, s);
    const EigEstimate dense = dense_leftmost(m);
    cfg.seed = s;
    const EigEstimate e = krylov_schur_leftmost(realize(m), cfg);
    ASSERT_TRUE(e.converged) << "seed " << s;
    EXPECT_LE(std::abs(e.theta - dense.theta), 1e-6) << "seed " << s;
  }
}

TEST(KrylovSchur, ResidualFormulaMatchesExplicitResidual) {
  const Matrix m = gaussian(150, 150, 11) / std::sqrt(150.0);
  const ComplexMatrix mc = m.cast<cd>();
  for (int cycles : {1, 3, 8}) {
    EstimatorConfig cfg{10, 25, 1e-14, cycles, 2};
    const EigEstimate e = krylov_schur_leftmost(realize(m), cfg);
    const ComplexVector v = e.vector;
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    const double explicit_residual = (mc * v - e.theta * v).norm();
    EXPECT_NEAR(e.residual, explicit_residual, 1e-9) << "cycles " << cycles;
  }
}

TEST(KrylovSchur, ConvergedEstimateSatisfiesResidualBound) {
  const Matrix m = separated_operator(80, 7);
  EstimatorConfig cfg{10, 20, 1e-6, 200, 3};
  const EigEstimate e = krylov_schur_leftmost(realize(m), cfg);
  ASSERT_TRUE(e.converged);
  const ComplexVector v = e.vector;
  EXPECT_LE((m.cast<cd>() * v - e.theta * v).norm(), e.residual + 1e-8);
}

TEST(KrylovSchur, IllConditionedSmallProblem) {
  IllPosedMatrixSpec spec;
  spec.singular_values = logspace(0, -4, 64);
  const Matrix a = make_ill_posed_matrix(spec);
  const Matrix b = make_unmatched_transpose(a, 0.05, 1);
  const EigEstimate dense = dense_leftmost(b * a);
  ASSERT_LT(dense.theta.real(), 0.0);
  EstimatorConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_cycles = 200;
  const EigEstimate e = krylov_schur_leftmost(make_dense_pair(a, b), cfg);
  ASSERT_TRUE(e.converged);
  EXPECT_LE(std::abs(e.theta.real() - dense.theta.real()), 1e-6);
}

TEST(KrylovSchur, MvmsAreCounted) {
  const Matrix m = separated_operator(100, 3);
  EstimatorConfig cfg{10, 20, 1e-300, 3, 1};
  const EigEstimate e = krylov_schur_leftmost(realize(m), cfg);
  EXPECT_FALSE(e.converged);
  // 20 for the first build, at least 10 more per restart, 2 MVMs each
  EXPECT_GE(e.mvms, 2u * (20 + 2 * 10));
  EXPECT_LE(e.mvms, 2u * (20 + 2 * 11));
  EXPECT_EQ(e.cycles, 3);
}

TEST(KrylovSchur, RejectsBadConfig) {
  const UnmatchedPair p = realize(Matrix::Identity(10, 10));
  EXPECT_THROW(krylov_schur_leftmost(p, EstimatorConfig{5, 5, 1e-2, 10, 1}), DomainError);
  EXPECT_THROW(krylov_schur_leftmost(p, EstimatorConfig{5, 11, 1e-2, 10, 1}), DomainError);
  EXPECT_THROW(krylov_schur_leftmost(p, EstimatorConfig{2, 5, 0.0, 10, 1}), DomainError);
}

TEST(Fov, SymmetricNegativeDefinite) {
  EstimatorConfig cfg{1, 3, 1e-2, 1, 1};
  const FovEstimate e = fov_leftmost(realize(diag({-3, -2, -1})), cfg, 1);
  EXPECT_NEAR(e.value, -3.0, 1e-12);
  EXPECT_EQ(e.expansions, 1);
}

TEST(Fov, JordanBlockDisk) {
  Matrix j = Matrix::Zero(2, 2);
  j(0, 1) = 1.0;
  EstimatorConfig cfg{1, 2, 1e-2, 1, 5};
  EXPECT_NEAR(fov_leftmost(realize(j), cfg, 1).value, -0.5, 1e-12);
  EXPECT_NEAR(numerical_abscissa_left(j), -0.5, 1e-15);
}

TEST(Fov, CompressionStaysInsideFieldOfValues) {
  const Matrix m = gaussian(90, 90, 21) / std::sqrt(90.0) + 0.5 * Matrix::Identity(90, 90);
  const double nu = numerical_abscissa_left(m);
  EstimatorConfig cfg{8, 16, 1e-2, 1, 1};
  for (int maxit : {1, 2, 5, 10}) {
    for (std::uint64_t s = 1; s <= 3; ++s) {
      cfg.seed = s;
      const FovEstimate e = fov_leftmost(realize(m), cfg, maxit);
      EXPECT_GE(e.value, nu - 1e-12);
      EXPECT_EQ(e.expansions, maxit);
      EXPECT_EQ(e.seed, s);
    }
  }
}

TEST(Fov, MvmCountOfFixedCycles) {
  const Matrix m = separated_operator(100, 5);
  EstimatorConfig cfg{30, 60, 1e-2, 50, 1};
  const FovEstimate e = fov_leftmost(realize(m), cfg, 10);
  // 60 + 9 * 30 = 330 BA products, up to one fewer kept vector per restart
  EXPECT_LE(e.mvms, 660u + 18u);
  EXPECT_GE(e.mvms, 660u);
}

TEST(SelectShift, Examples) {
  EXPECT_EQ(select_shift(0.05), 0.0);
  EXPECT_NEAR(select_shift(-0.9281), 1.8562, 1e-15);
  EXPECT_NEAR(select_shift(-0.02), 0.04, 1e-17);
  EXPECT_NEAR(select_shift(-0.02, 3.0), 0.06, 1e-17);
  EXPECT_THROW(select_shift(-0.02, 0.5), DomainError);
  EigEstimate e;
  e.theta = cd(-0.3, 0.1);
  EXPECT_NEAR(select_shift(e), 0.6, 1e-15);
}

TEST(SelectShift, NeverUnderShiftsWithFieldOfValues) {
  // Re(lambda_lm) >= nu(M), so shifting by 2|nu| covers the leftmost eigenvalue
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const Matrix m = gaussian(40, 40, s) / std::sqrt(40.0) + 0.2 * Matrix::Identity(40, 40);
    const double nu = numerical_abscissa_left(m);
    const double lm = dense_leftmost(m).theta.real();
    EXPECT_GE(lm, nu - 1e-12);
    if (nu < 0) EXPECT_GT(lm + select_shift(nu), 0.0);
  }
}

TEST(DenseLeftmost, Examples) {
  EXPECT_NEAR(dense_leftmost(diag({3, 1, 2})).theta.real(), 1.0, 1e-14);

  Matrix rot(2, 2);
  rot << 0, -1, 1, 0;
  const cd r = dense_leftmost(rot).theta;
  EXPECT_NEAR(r.real(), 0.0, 1e-14);
  EXPECT_NEAR(r.imag(), 1.0, 1e-14);

  // companion matrix of z^3 - 1
  Matrix c = Matrix::Zero(3, 3);
  c(1, 0) = 1;
  c(2, 1) = 1;
  c(0, 2) = 1;
  const cd z = dense_leftmost(c).theta;
  EXPECT_NEAR(z.real(), -0.5, 1e-12);
  EXPECT_NEAR(z.imag(), std::sqrt(3.0) / 2.0, 1e-12);
}

TEST(DenseLeftmost, EigenvectorAndGuard) {
  const Matrix m = gaussian(30, 30, 2);
  const EigEstimate e = dense_leftmost(m);
  EXPECT_EQ(e.method, EstimateMethod::dense_oracle);
  EXPECT_LE(e.residual, 1e-10 * m.norm());
  EXPECT_THROW(dense_leftmost(Matrix::Zero(2001, 2001)), SizeGuardError);
  EXPECT_THROW(dense_leftmost(Matrix::Zero(2, 3)), ShapeError);
}

TEST(LeftmostOrder, TieBreaks) {
  EXPECT_TRUE(leftmost_before({-1, 5}, {0, 0}, 0.0));
  EXPECT_TRUE(leftmost_before({0, 0.1}, {0, 0.2}, 0.0));
  EXPECT_TRUE(leftmost_before({0, 1}, {0, -1}, 0.0));
  EXPECT_FALSE(leftmost_before({0, -1}, {0, 1}, 0.0));
}

TEST(KrylovSchur, MiniCtMatchesDenseWithinTolerance) {
  const CtGeometry g;  // 32 x 32 image
  const UnmatchedPair pair = make_ct_pair(g, CtRealization::sparse);
  const Matrix ba = Matrix(ct_back_matrix(g)) * Matrix(ct_forward_matrix(g));
  const EigEstimate dense = dense_leftmost(ba);
  const EigEstimate e = krylov_schur_leftmost(pair, EstimatorConfig{});
  ASSERT_TRUE(e.converged);
  EXPECT_LE(std::abs(e.theta - dense.theta), 1e-2);

  const double nu = numerical_abscissa_left(ba);
  EXPECT_LE(nu, dense.theta.real());
  for (int maxit : {10, 15, 20}) {
    EXPECT_GE(fov_leftmost(pair, EstimatorConfig{}, maxit).value, nu - 1e-10);
  }
}
