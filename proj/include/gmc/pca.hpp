#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "gmc/tensor.hpp"

namespace gmc {

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // row i is the eigenvector for values[i]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen jacobi_eigen(const Matrix& sym, int max_sweeps = 100) {
  if (!sym.is_square()) throw DimensionError("jacobi_eigen: matrix is not square");
  const std::size_t n = sym.rows();
  Matrix a = symmetrize(sym);
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymmetricEigen out{Vector(n), Matrix(n, n)};
  for (std::size_t r = 0; r < n; ++r) {
    out.values[r] = a(order[r], order[r]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(r, k) = v(k, order[r]);
  }
  return out;
}

struct PcaModel {
  Vector mean;
  Matrix components;   // num_components × dim, orthonormal rows
  Vector explained_variance;

  Vector project(const Vector& x) const { return matvec(components, x - mean); }
  Vector reconstruct(const Vector& z) const { return mean + matvec_transposed(components, z); }
};

/// Principal components of `data` from the sample covariance (divisor N-1).
inline PcaModel pca_fit(std::span<const Vector> data, std::size_t num_components) {
  if (data.size() < 2) throw Error("pca_fit: need at least 2 samples");
  const std::size_t d = data.front().dim();
  if (num_components == 0 || num_components > d)
    throw DimensionError("pca_fit: num_components must be in [1, dim]");
  Vector mean(d);
  for (const auto& x : data) {
    if (x.dim() != d) throw DimensionError("pca_fit: ragged data");
    for (std::size_t i = 0; i < d; ++i) mean[i] += x[i];
  }
  const double n = static_cast<double>(data.size());
  for (std::size_t i = 0; i < d; ++i) mean[i] /= n;
  Matrix cov(d, d);
  for (const auto& x : data) {
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = x[i] - mean[i];
      for (std::size_t j = i; j < d; ++j) cov(i, j) += xi * (x[j] - mean[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i; j < d; ++j) {
      cov(i, j) /= (n - 1.0);
      cov(j, i) = cov(i, j);
    }
  const auto eig = jacobi_eigen(cov);
  PcaModel model{mean, Matrix(num_components, d), Vector(num_components)};
  for (std::size_t r = 0; r < num_components; ++r) {
    model.explained_variance[r] = eig.values[r];
    for (std::size_t k = 0; k < d; ++k) model.components(r, k) = eig.vectors(r, k);
  }
  return model;
}

}  // namespace gmc
