#include <gtest/gtest.h>

#include "gmc/nearest.hpp"
#include "gmc/pca.hpp"
#include "gmc/tensor.hpp"
#include "test_support.hpp"

using namespace gmc;
using namespace gmc::testing;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Matrix m{{1.5, -2.0, 3.0}, {0.25, 4.0, -1.0}};
  EXPECT_EQ(matmul(Matrix::identity(2), m), m);
}

TEST(Matmul, PermutationSwapsColumns) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix p{{0, 1}, {1, 0}};
  EXPECT_EQ(matmul(a, p), (Matrix{{2, 1}, {4, 3}}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(rng, 5, 5), b = random_matrix(rng, 5, 5);
    EXPECT_LE(max_abs_diff(matmul(a, b), triple_loop_matmul(a, b)), 1e-12);
  }
  const Matrix a = random_matrix(rng, 37, 13), b = random_matrix(rng, 13, 29);
  EXPECT_LE(max_abs_diff(matmul(a, b), triple_loop_matmul(a, b)), 1e-12);
}

TEST(Matmul, TransposedVariantMatchesOracle) {
  Rng rng(12);
  const Matrix a = random_matrix(rng, 9, 4), b = random_matrix(rng, 7, 4);
  EXPECT_LE(max_abs_diff(matmul_transposed(a, b), triple_loop_matmul(a, transpose(b))), 1e-12);
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), DimensionError);
  EXPECT_THROW(matmul_transposed(Matrix(2, 3), Matrix(2, 4)), DimensionError);
  EXPECT_THROW(matvec(Matrix(2, 3), Vector(2)), DimensionError);
  EXPECT_THROW(matvec_transposed(Matrix(2, 3), Vector(3)), DimensionError);
}

TEST(Matmul, EmptyInnerDimensionGivesZeros) {
  const Matrix out = matmul(Matrix(3, 0), Matrix(0, 2));
  EXPECT_EQ(out, Matrix(3, 2));
}

TEST(Matvec, MatchesNaiveLoops) {
  Rng rng(13);
  const Matrix a = random_matrix(rng, 6, 4);
  const Vector x = random_vector(rng, 4), y = random_vector(rng, 6);
  EXPECT_LE(max_abs_diff(matvec(a, x), naive_matvec(a, x)), 1e-13);
  EXPECT_LE(max_abs_diff(matvec_transposed(a, y), naive_matvec(transpose(a), y)), 1e-13);
}

TEST(MatrixType, RaggedInitializerThrows) {
  EXPECT_THROW((Matrix{{1, 2}, {3}}), DimensionError);
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(DenseSolve, IdentityReturnsRhs) {
  const Vector b{3, -1, 2};
  EXPECT_EQ(dense_solve(Matrix::identity(3), b), b);
}

TEST(DenseSolve, DiagonalSystem) {
  const Vector x = dense_solve(Matrix{{2, 0}, {0, 4}}, Vector{2, 8});
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 2.0);
}

TEST(DenseSolve, RandomSpdResidual) {
  Rng rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix a = random_spd(rng, 8);
    const Vector b = random_vector(rng, 8);
    const Vector x = dense_solve(a, b);
    const Vector r = naive_matvec(a, x) - b;
    EXPECT_LE(max_abs_entry(r), 1e-10 * std::max(1.0, max_abs_entry(b)));
  }
}

TEST(DenseSolve, RoundTripsThroughMatmul) {
  Rng rng(15);
  for (int rep = 0; rep < 10; ++rep) {
    Matrix a = random_matrix(rng, 6, 6);
    for (std::size_t i = 0; i < 6; ++i) a(i, i) += 8.0;  // keep it well conditioned
    const Vector x = random_vector(rng, 6);
    EXPECT_LE(max_abs_diff(dense_solve(a, matvec(a, x)), x), 1e-8);
  }
}

TEST(DenseSolve, NeedsPivoting) {
  const Vector x = dense_solve(Matrix{{0, 1}, {1, 0}}, Vector{5, 7});
  EXPECT_DOUBLE_EQ(x[0], 7.0);
  EXPECT_DOUBLE_EQ(x[1], 5.0);
}

TEST(DenseSolve, SingularReportsPivot) {
  const Matrix a{{1, 2, 3}, {2, 4, 6}, {0, 0, 1}};
  try {
    dense_solve(a, Vector{1, 2, 3});
    FAIL() << "expected SingularMatrixError";
  } catch (const SingularMatrixError& e) {
    EXPECT_EQ(e.pivot(), 1u);
  }
  EXPECT_THROW(dense_solve(Matrix(2, 2), Vector(2)), SingularMatrixError);
}

TEST(DenseSolve, ShapeErrors) {
  EXPECT_THROW(dense_solve(Matrix(2, 3), Vector(2)), DimensionError);
  EXPECT_THROW(dense_solve(Matrix::identity(2), Vector(3)), DimensionError);
}

TEST(DenseInverse, MatchesGaussJordanOracle) {
  Rng rng(16);
  const Matrix a = random_spd(rng, 7);
  EXPECT_LE(max_abs_diff(dense_inverse(a), gauss_jordan_inverse(a)), 1e-10);
}

TEST(Cholesky, ReconstructsAndSolves) {
  Rng rng(17);
  const Matrix a = random_spd(rng, 6);
  const Matrix l = cholesky(a);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) EXPECT_EQ(l(i, j), 0.0);
  EXPECT_LE(max_abs_diff(triple_loop_matmul(l, transpose(l)), a), 1e-10);
  const Vector b = random_vector(rng, 6);
  EXPECT_LE(max_abs_diff(cholesky_solve(l, b), dense_solve(a, b)), 1e-10);
  EXPECT_LE(max_abs_diff(cholesky_inverse(l), gauss_jordan_inverse(a)), 1e-10);
  // log det from the pivots of plain elimination (SPD needs no pivoting)
  double logdet = 0.0;
  Matrix m = a;
  for (std::size_t c = 0; c < 6; ++c) {
    logdet += std::log(m(c, c));
    for (std::size_t r = c + 1; r < 6; ++r) {
      const double f = m(r, c) / m(c, c);
      for (std::size_t j = c; j < 6; ++j) m(r, j) -= f * m(c, j);
    }
  }
  EXPECT_NEAR(cholesky_logdet(l), logdet, 1e-10);
}

TEST(Cholesky, IndefiniteThrowsWithBlockIndex) {
  try {
    cholesky(Matrix{{1, 2}, {2, 1}}, 4);
    FAIL() << "expected NotPositiveDefiniteError";
  } catch (const NotPositiveDefiniteError& e) {
    EXPECT_EQ(e.block(), 4u);
  }
}

TEST(Symmetry, SymmetrizeAndCheck) {
  const Matrix a{{1, 2}, {0, 1}};
  EXPECT_FALSE(is_symmetric(a, 1e-12));
  EXPECT_TRUE(is_symmetric(symmetrize(a), 0.0));
  EXPECT_DOUBLE_EQ(symmetrize(a)(0, 1), 1.0);
}

TEST(VectorOps, Basics) {
  const Vector a{3, 4}, b{1, -1};
  EXPECT_DOUBLE_EQ(norm(a), 5.0);
  EXPECT_DOUBLE_EQ(dot(a, b), -1.0);
  EXPECT_DOUBLE_EQ(squared_distance(a.span(), b.span()), 4.0 + 25.0);
  EXPECT_EQ(a + b, (Vector{4, 3}));
  EXPECT_EQ(a - b, (Vector{2, 5}));
  EXPECT_EQ(2.0 * b, (Vector{2, -2}));
  EXPECT_TRUE(all_finite(a));
  EXPECT_FALSE(all_finite(Vector{1.0, std::nan("")}));
  EXPECT_THROW((a + Vector{1, 2, 3}), DimensionError);
}

// ---------------------------------------------------------------------------
// PCA

TEST(Pca, LineInPlaneGivesParallelComponent) {
  std::vector<Vector> pts;
  for (int i = -10; i <= 10; ++i) pts.push_back(Vector{1.0 + 3.0 * i, -2.0 + 4.0 * i});
  const PcaModel m = pca_fit(pts, 1);
  EXPECT_NEAR(std::abs(m.components(0, 0)), 0.6, 1e-10);
  EXPECT_NEAR(std::abs(m.components(0, 1)), 0.8, 1e-10);
  EXPECT_GT(m.components(0, 0) * m.components(0, 1), 0.0);
}

TEST(Pca, IsotropicCloudHasUnitVariances) {
  Rng rng(21);
  std::vector<Vector> pts;
  for (int i = 0; i < 20000; ++i) pts.push_back(random_vector(rng, 3));
  const PcaModel m = pca_fit(pts, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m.explained_variance[i], 1.0, 0.05);
}

TEST(Pca, KnownAxisVariancesInOrder) {
  Rng rng(22);
  std::vector<Vector> pts;
  const double sd[3] = {2.0, 1.0, 0.1};
  for (int i = 0; i < 10000; ++i) pts.push_back(Vector{sd[0] * rng.normal(), sd[1] * rng.normal(), sd[2] * rng.normal()});
  const PcaModel m = pca_fit(pts, 3);
  const double var[3] = {4.0, 1.0, 0.01};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(m.explained_variance[i], var[i], 0.1 * var[i]);
    EXPECT_GT(std::abs(m.components(i, i)), 0.99);
  }
}

TEST(Pca, ComponentsAreOrthonormal) {
  Rng rng(23);
  std::vector<Vector> pts;
  const Matrix mix = random_matrix(rng, 5, 5);
  for (int i = 0; i < 500; ++i) pts.push_back(matvec(mix, random_vector(rng, 5)));
  const PcaModel m = pca_fit(pts, 5);
  const Matrix gram = triple_loop_matmul(m.components, transpose(m.components));
  EXPECT_LE(max_abs_diff(gram, Matrix::identity(5)), 1e-8);
  for (std::size_t i = 0; i + 1 < 5; ++i) EXPECT_GE(m.explained_variance[i], m.explained_variance[i + 1]);
  // full-rank projection round-trips
  EXPECT_LE(max_abs_diff(m.reconstruct(m.project(pts[3])), pts[3]), 1e-9);
}

TEST(Pca, Errors) {
  const std::vector<Vector> one{Vector{1, 2}};
  EXPECT_THROW(pca_fit(one, 1), Error);
  const std::vector<Vector> two{Vector{1, 2}, Vector{2, 3}};
  EXPECT_THROW(pca_fit(two, 3), DimensionError);
  EXPECT_THROW(pca_fit(two, 0), DimensionError);
}

TEST(JacobiEigen, MatchesKnownSpectrum) {
  const Matrix a{{2, 1, 0}, {1, 2, 0}, {0, 0, 5}};
  const auto e = jacobi_eigen(a);
  EXPECT_NEAR(e.values[0], 5.0, 1e-12);
  EXPECT_NEAR(e.values[1], 3.0, 1e-12);
  EXPECT_NEAR(e.values[2], 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Nearest neighbour

TEST(Nearest, ExactMatchAndTieBreak) {
  const std::vector<std::pair<Vector, int>> bank{{Vector{0, 0}, 10}, {Vector{1, 1}, 11}, {Vector{-1, -1}, 12}};
  EXPECT_EQ(nearest_neighbor<int>(Vector{1, 1}, bank), 11);
  const std::vector<std::pair<Vector, int>> tie{{Vector{1, 0}, 1}, {Vector{-1, 0}, 2}};
  EXPECT_EQ(nearest_neighbor<int>(Vector{0, 0}, tie), 1);
  const std::vector<Vector> plain{Vector{2, 0}, Vector{0, 2}};
  EXPECT_EQ(nearest_index(Vector{0, 0}, plain), 0u);
}

TEST(Nearest, MatchesExhaustiveScan) {
  Rng rng(31);
  std::vector<Vector> bank;
  for (int i = 0; i < 100; ++i) bank.push_back(random_vector(rng, 8));
  for (int q = 0; q < 50; ++q) {
    const Vector query = random_vector(rng, 8);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < 8; ++j) d += (bank[i][j] - query[j]) * (bank[i][j] - query[j]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    EXPECT_EQ(nearest_index(query, bank), best);
  }
}

TEST(Nearest, EmptyBankThrows) {
  const std::vector<Vector> empty;
  EXPECT_THROW(nearest_index(Vector{0}, empty), Error);
  const std::vector<std::pair<Vector, int>> none;
  EXPECT_THROW(nearest_neighbor<int>(Vector{0}, none), Error);
}
