#pragma once

// Symmetric positive definite block-tridiagonal systems: O(n·k³) solves and
// the diagonal blocks of the inverse (marginal covariances of a Gauss-Markov
// chain in canonical form).

#include <cstddef>
#include <string>
#include <vector>

#include "gmc/tensor.hpp"

namespace gmc {

/// n diagonal k×k blocks, n-1 sub-diagonal blocks (lower[i] sits at block
/// position (i+1, i)) and n-1 super-diagonal blocks (upper[i] at (i, i+1)).
struct BlockTridiagonal {
  std::size_t n = 0;
  std::size_t block_dim = 0;
  std::vector<Matrix> diag;
  std::vector<Matrix> lower;
  std::vector<Matrix> upper;

  void validate() const {
    if (n == 0) throw DimensionError("block tridiagonal: zero blocks");
    if (diag.size() != n || lower.size() != n - 1 || upper.size() != n - 1)
      throw DimensionError("block tridiagonal: block counts do not match n");
    auto check = [&](const Matrix& m) {
      if (m.rows() != block_dim || m.cols() != block_dim)
        throw DimensionError("block tridiagonal: block is not " + std::to_string(block_dim) +
                             "x" + std::to_string(block_dim));
    };
    for (const auto& m : diag) check(m);
    for (const auto& m : lower) check(m);
    for (const auto& m : upper) check(m);
  }

  std::size_t dim() const noexcept { return n * block_dim; }
};

/// Dense (n·k)×(n·k) matrix with the same entries.
inline Matrix assemble(const BlockTridiagonal& m) {
  m.validate();
  const std::size_t k = m.block_dim;
  Matrix out(m.dim(), m.dim());
  auto put = [&](std::size_t bi, std::size_t bj, const Matrix& blk) {
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) out(bi * k + r, bj * k + c) = blk(r, c);
  };
  for (std::size_t i = 0; i < m.n; ++i) put(i, i, m.diag[i]);
  for (std::size_t i = 0; i + 1 < m.n; ++i) {
    put(i + 1, i, m.lower[i]);
    put(i, i + 1, m.upper[i]);
  }
  return out;
}

namespace detail {

// Forward block elimination: schur[i] = D_i - L_{i-1} schur[i-1]^{-1} U_{i-1},
// stored as Cholesky factors. A failed factorisation means the assembled
// matrix is not SPD.
inline std::vector<Matrix> forward_schur_factors(const BlockTridiagonal& m) {
  std::vector<Matrix> factors;
  factors.reserve(m.n);
  factors.push_back(cholesky(m.diag[0], 0));
  for (std::size_t i = 1; i < m.n; ++i) {
    const Matrix coupling = cholesky_solve(factors[i - 1], m.upper[i - 1]);
    const Matrix schur = m.diag[i] - matmul(m.lower[i - 1], coupling);
    factors.push_back(cholesky(symmetrize(schur), i));
  }
  return factors;
}

// Backward elimination from the last block: E_i = D_i - U_i E_{i+1}^{-1} L_i.
inline std::vector<Matrix> backward_schur(const BlockTridiagonal& m) {
  std::vector<Matrix> schur(m.n);
  schur[m.n - 1] = m.diag[m.n - 1];
  for (std::size_t i = m.n - 1; i-- > 0;) {
    const Matrix f = cholesky(symmetrize(schur[i + 1]), i + 1);
    schur[i] = symmetrize(m.diag[i] - matmul(m.upper[i], cholesky_solve(f, m.lower[i])));
  }
  return schur;
}

}  // namespace detail

/// Solves m·x = rhs where rhs stacks n blocks of length k.
/// Throws NotPositiveDefiniteError naming the first block whose Schur
/// complement is not positive definite.
inline Vector block_tridiag_solve(const BlockTridiagonal& m, const Vector& rhs) {
  m.validate();
  if (rhs.dim() != m.dim()) throw DimensionError("block_tridiag_solve: rhs length mismatch");
  const std::size_t k = m.block_dim;
  const auto factors = detail::forward_schur_factors(m);

  auto block_of = [k](const Vector& v, std::size_t i) {
    return Vector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(i * k),
                                      v.begin() + static_cast<std::ptrdiff_t>((i + 1) * k)));
  };

  std::vector<Vector> y(m.n);
  y[0] = block_of(rhs, 0);
  for (std::size_t i = 1; i < m.n; ++i) {
    const Vector prev = cholesky_solve(factors[i - 1], y[i - 1]);
    y[i] = block_of(rhs, i) - matvec(m.lower[i - 1], prev);
  }

  std::vector<Vector> x(m.n);
  x[m.n - 1] = cholesky_solve(factors[m.n - 1], y[m.n - 1]);
  for (std::size_t i = m.n - 1; i-- > 0;)
    x[i] = cholesky_solve(factors[i], y[i] - matvec(m.upper[i], x[i + 1]));

  Vector out(m.dim());
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t r = 0; r < k; ++r) out[i * k + r] = x[i][r];
  return out;
}

/// Diagonal k×k blocks of m⁻¹, combining the forward and backward Schur
/// complements: (m⁻¹)_ii = (F_i + E_i - D_i)⁻¹.
inline std::vector<Matrix> block_tridiag_marginal_covs(const BlockTridiagonal& m) {
  m.validate();
  const auto forward = detail::forward_schur_factors(m);
  const auto backward = detail::backward_schur(m);
  std::vector<Matrix> covs;
  covs.reserve(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    const Matrix& l = forward[i];
    const Matrix f = matmul_transposed(l, l);
    const Matrix joint = symmetrize(f + backward[i] - m.diag[i]);
    covs.push_back(symmetrize(cholesky_inverse(cholesky(joint, i))));
  }
  return covs;
}

}  // namespace gmc
