#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "gpc/ledger.hpp"
#include "gpc/linalg.hpp"
#include "oracles.hpp"

using namespace gpc;

TEST(Matrix, ConstructionChecksShapeAndFiniteness) {
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m.values().size(), 6u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_THROW((Matrix{{1, 2}, {3}}), Error);
  EXPECT_THROW((Matrix{{1, NAN}}), Error);
  const std::vector<double> inf{1.0, INFINITY};
  EXPECT_THROW(Matrix::from_values(1, 2, inf), Error);
  EXPECT_THROW(Matrix::from_values(2, 2, inf), Error);
}

TEST(Matrix, TransposeAndRowSelection) {
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  const Matrix t = m.transposed();
  EXPECT_EQ(t, (Matrix{{1, 4}, {2, 5}, {3, 6}}));
  const std::vector<std::size_t> idx{1, 0, 1};
  EXPECT_EQ(m.select_rows(idx), (Matrix{{4, 5, 6}, {1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(m.row_range(1, 2), (Matrix{{4, 5, 6}}));
}

TEST(Matmul, IdentityReturnsOperand) {
  const Matrix b = oracle::random_matrix(3, 2, 1);
  EXPECT_EQ(matmul(Matrix::identity(3), b), b);
}

TEST(Matmul, SmallProduct) {
  const Matrix c = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{5}, {6}});
  EXPECT_EQ(c, (Matrix{{17}, {39}}));
}

TEST(Matmul, TransposeFlagMatchesExplicitTranspose) {
  const Matrix a = oracle::random_matrix(4, 3, 2);
  const Matrix b = oracle::random_matrix(4, 5, 3);
  EXPECT_EQ(matmul(a, b, true, false), matmul(a.transposed(), b));
  const Matrix c = oracle::random_matrix(5, 3, 4);
  EXPECT_EQ(matmul(a, c, false, true), matmul(a, c.transposed()));
  EXPECT_EQ(matmul(a.transposed(), c, true, true), matmul(a, c.transposed()));
}

TEST(Matmul, MatchesTripleLoop) {
  for (std::size_t k : {1u, 2u, 3u, 4u, 7u, 17u}) {
    const Matrix a = oracle::random_matrix(6, k, 10 + k);
    const Matrix b = oracle::random_matrix(k, 5, 20 + k);
    const auto ref = oracle::triple_loop(oracle::to_dense(a), oracle::to_dense(b));
    const Matrix c = matmul(a, b);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(c(i, j), ref[i][j], 1e-13);
  }
}

TEST(Matmul, BitDeterministic) {
  const Matrix a = oracle::random_matrix(40, 33, 5);
  const Matrix b = oracle::random_matrix(33, 29, 6);
  const Matrix c1 = matmul(a, b);
  const Matrix c2 = matmul(a, b);
  EXPECT_EQ(std::memcmp(c1.data(), c2.data(), c1.values().size() * sizeof(double)), 0);
}

TEST(Matmul, DimensionMismatchThrows) {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Cholesky, IdentityNeedsNoJitter) {
  const CholeskyFactor f = cholesky(Matrix::identity(4));
  EXPECT_EQ(f.lower, Matrix::identity(4));
  EXPECT_EQ(f.jitter_used, 0.0);
}

TEST(Cholesky, TwoByTwo) {
  const CholeskyFactor f = cholesky(Matrix{{4, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(f.lower(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(f.lower(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.lower(1, 1), std::sqrt(2.0));
  EXPECT_EQ(f.lower(0, 1), 0.0);
  const Matrix llt = matmul(f.lower, f.lower, false, true);
  EXPECT_LE(max_abs_diff(llt.values(), Matrix{{4, 2}, {2, 3}}.values()), 1e-15);
}

TEST(Cholesky, IndefiniteThrows) {
  try {
    cholesky(Matrix{{1, 2}, {2, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotPositiveDefinite);
  }
}

TEST(Cholesky, ShapeAndSymmetryErrors) {
  try {
    cholesky(Matrix(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonSquare);
  }
  try {
    cholesky(Matrix{{2, 1}, {0, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonSymmetric);
  }
}

TEST(Cholesky, ReconstructsRandomSpd) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 5 + seed * 7;
    const Matrix a = oracle::random_spd(n, seed);
    const CholeskyFactor f = cholesky(a);
    EXPECT_EQ(f.jitter_used, 0.0);
    const Matrix llt = matmul(f.lower, f.lower, false, true);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) {
      num += std::pow(llt.values()[i] - a.values()[i], 2);
      den += a.values()[i] * a.values()[i];
    }
    EXPECT_LE(std::sqrt(num / den), 1e-10);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GT(f.lower(i, i), 0.0);
      for (std::size_t j = i + 1; j < n; ++j) EXPECT_EQ(f.lower(i, j), 0.0);
    }
  }
}

TEST(Cholesky, SingularPsdGetsJitter) {
  // Rank one: v·vᵀ.
  const std::vector<double> v{1.0, 2.0, 3.0};
  Matrix a(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = v[i] * v[j];
  const CholeskyFactor f = cholesky(a);
  EXPECT_GT(f.jitter_used, 0.0);
  const double mean_diag = 14.0 / 3.0;
  EXPECT_LE(f.jitter_used, 1e-10 * mean_diag * 1000.0 * (1 + 1e-12));
  Matrix aj = a;
  for (std::size_t i = 0; i < 3; ++i) aj(i, i) += f.jitter_used;
  const Matrix llt = matmul(f.lower, f.lower, false, true);
  EXPECT_LE(max_abs_diff(llt.values(), aj.values()), 1e-12);
}

TEST(Trisolve, IdentityAndHandExample) {
  const Matrix b = oracle::random_matrix(3, 2, 9);
  const CholeskyFactor id{Matrix::identity(3), 0.0};
  EXPECT_EQ(trisolve(id, b, Triangle::Lower), b);
  EXPECT_EQ(trisolve(id, b, Triangle::UpperTransposed), b);

  const CholeskyFactor l{Matrix{{2, 0}, {1, std::sqrt(2.0)}}, 0.0};
  const Matrix x = trisolve(l, Matrix{{2}, {1 + std::sqrt(2.0)}}, Triangle::Lower);
  EXPECT_NEAR(x(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(x(1, 0), 1.0, 1e-15);
}

TEST(Trisolve, ChainedSolveMatchesGaussianElimination) {
  const Matrix a = oracle::random_spd(6, 42);
  const auto b = oracle::random_vector(6, 43);
  const CholeskyFactor f = cholesky(a);
  const Vector y = trisolve(f, b, Triangle::Lower);
  const Vector x = trisolve(f, y, Triangle::UpperTransposed);
  const auto ref = oracle::solve(oracle::to_dense(a), b);
  EXPECT_LE(max_abs_diff(x, ref), 1e-10);
  EXPECT_LE(max_abs_diff(cholesky_solve(f, b), ref), 1e-10);

  // Matrix right-hand side, column by column.
  Matrix bm(6, 3);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto col = oracle::random_vector(6, 50 + c);
    for (std::size_t i = 0; i < 6; ++i) bm(i, c) = col[i];
  }
  const Matrix xm = trisolve(f, trisolve(f, bm, Triangle::Lower), Triangle::UpperTransposed);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> col(6);
    for (std::size_t i = 0; i < 6; ++i) col[i] = bm(i, c);
    const auto r = oracle::solve(oracle::to_dense(a), col);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(xm(i, c), r[i], 1e-10);
  }
}

TEST(Trisolve, ZeroDiagonalIsSingular) {
  const CholeskyFactor f{Matrix{{1, 0}, {1, 0}}, 0.0};
  try {
    trisolve(f, std::vector<double>{1.0, 1.0}, Triangle::Lower);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Singular);
  }
}

TEST(Trisolve, RowCountMismatchThrows) {
  EXPECT_THROW(trisolve(cholesky(Matrix::identity(3)), Matrix(2, 1), Triangle::Lower), Error);
}

TEST(PairwiseSqdist, SmallCases) {
  EXPECT_EQ(pairwise_sqdist(Matrix{{1.5, -2}}, Matrix{{1.5, -2}}), (Matrix{{0}}));
  EXPECT_EQ(pairwise_sqdist(Matrix{{0}}, Matrix{{3}}), (Matrix{{9}}));
  EXPECT_THROW(pairwise_sqdist(Matrix(2, 2), Matrix(2, 3)), Error);
}

TEST(PairwiseSqdist, MatchesNaiveLoop) {
  for (std::size_t d : {1u, 2u, 3u, 5u, 9u}) {
    const Matrix x = oracle::random_matrix(5, d, 100 + d);
    const Matrix y = oracle::random_matrix(7, d, 200 + d);
    const Matrix g = pairwise_sqdist(x, y);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j) EXPECT_NEAR(g(i, j), oracle::sqdist(x.row(i).data(), y.row(j).data(), d), 1e-9);
  }
}

TEST(PairwiseSqdist, SymmetricWithZeroDiagonal) {
  for (std::size_t d : {1u, 4u}) {
    const Matrix x = oracle::random_matrix(30, d, 7 + d, -100, 100);
    const Matrix g = pairwise_sqdist(x, x);
    for (std::size_t i = 0; i < 30; ++i) {
      EXPECT_EQ(g(i, i), 0.0);
      for (std::size_t j = 0; j < 30; ++j) {
        EXPECT_EQ(g(i, j), g(j, i));
        EXPECT_GE(g(i, j), 0.0);
      }
    }
  }
}

TEST(Logdet, DiagonalAndIdentity) {
  EXPECT_EQ(logdet_from_chol(cholesky(Matrix::identity(5))), 0.0);
  EXPECT_NEAR(logdet_from_chol(cholesky(Matrix{{1, 0, 0}, {0, 2, 0}, {0, 0, 4}})), std::log(8.0), 1e-15);
}

TEST(Logdet, MatchesJacobiEigenvalues) {
  const Matrix a = oracle::random_spd(8, 77, 0.5);
  double ref = 0.0;
  for (double ev : oracle::jacobi_eigenvalues(oracle::to_dense(a))) ref += std::log(ev);
  EXPECT_NEAR(logdet_from_chol(cholesky(a)), ref, 1e-9);
}

TEST(Ledger, BuffersRegisterAndDeregister) {
  auto& ledger = AllocationLedger::instance();
  const auto before = ledger.current_bytes();
  const auto allocs = ledger.allocation_count();
  const auto deallocs = ledger.deallocation_count();
  {
    const PeakScope scope;
    Matrix m(100, 10);
    EXPECT_EQ(ledger.current_bytes() - before, 8000);
    Vector v(50);
    EXPECT_EQ(scope.extra_peak(), 8400);
    EXPECT_GE(ledger.peak_bytes(), ledger.current_bytes());
  }
  EXPECT_EQ(ledger.current_bytes(), before);
  EXPECT_EQ(ledger.allocation_count() - allocs, ledger.deallocation_count() - deallocs);
  EXPECT_GE(ledger.current_bytes(), 0);
}
