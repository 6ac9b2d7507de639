#pragma once

// Closed-form Gaussian inference over learned representations: future and
// past prediction, one-waypoint and many-waypoint posteriors, and the
// interpolation shortcut for orthogonal A with a loose norm budget.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "gmc/block_tridiag.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

enum class BeliefForm { moment, canonical };

/// Either (mean, covariance) or (η, precision) with mean = precision⁻¹ η.
struct GaussianBelief {
  BeliefForm form = BeliefForm::moment;
  Vector mean_or_eta;
  Matrix cov_or_precision;

  std::size_t dim() const { return mean_or_eta.dim(); }

  static GaussianBelief moment(Vector mean, Matrix cov) {
    return {BeliefForm::moment, std::move(mean), std::move(cov)};
  }
  static GaussianBelief canonical(Vector eta, Matrix precision) {
    return {BeliefForm::canonical, std::move(eta), std::move(precision)};
  }

  /// Same distribution in the other parametrisation.
  GaussianBelief converted() const {
    const Matrix l = cholesky(cov_or_precision);
    Matrix inv = symmetrize(cholesky_inverse(l));
    Vector v = cholesky_solve(l, mean_or_eta);
    return {form == BeliefForm::moment ? BeliefForm::canonical : BeliefForm::moment, std::move(v),
            std::move(inv)};
  }

  GaussianBelief to_moment() const { return form == BeliefForm::moment ? *this : converted(); }
  GaussianBelief to_canonical() const { return form == BeliefForm::canonical ? *this : converted(); }

  const Vector& mean() const {
    if (form != BeliefForm::moment) throw Error("belief is in canonical form; convert first");
    return mean_or_eta;
  }
  const Matrix& cov() const {
    if (form != BeliefForm::moment) throw Error("belief is in canonical form; convert first");
    return cov_or_precision;
  }
};

struct PlanResult {
  std::vector<GaussianBelief> waypoints;      // moment form
  std::vector<double> interpolation_weights;  // λ(i) = i/(n+1), special case only
  bool approximate_covariances = false;       // true when covariances were not computed
};

namespace detail {

inline void check_c(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw Error("norm budget c must be positive, got " + std::to_string(c));
}

inline void check_square(const Matrix& a, std::size_t k, const char* who) {
  if (!a.is_square() || a.rows() != k)
    throw DimensionError(std::string(who) + ": A must be square with side equal to the representation dim");
}

inline GaussianBelief shrunk_prediction(const Vector& mean_direction, double c) {
  const double s = c / (c + 1.0);
  return GaussianBelief::moment(s * mean_direction, s * Matrix::identity(mean_direction.dim()));
}

/// (c/(c+1))AᵀA + ((c+1)/c)I
inline Matrix waypoint_precision_block(const Matrix& a, double c) {
  const std::size_t k = a.rows();
  Matrix out = (c / (c + 1.0)) * matmul(transpose(a), a);
  const double d = (c + 1.0) / c;
  for (std::size_t i = 0; i < k; ++i) out(i, i) += d;
  return symmetrize(out);
}

}  // namespace detail

/// Distribution of the representation of a future state:
/// N((c/(c+1))·Aψ₀, (c/(c+1))·I).
inline GaussianBelief predict_future(const Vector& psi0, const Matrix& a, double c) {
  detail::check_c(c);
  detail::check_square(a, psi0.dim(), "predict_future");
  return detail::shrunk_prediction(matvec(a, psi0), c);
}

/// Distribution of the representation of a preceding state (A replaced by Aᵀ).
inline GaussianBelief predict_past(const Vector& psi_t, const Matrix& a, double c) {
  detail::check_c(c);
  detail::check_square(a, psi_t.dim(), "predict_past");
  return detail::shrunk_prediction(matvec_transposed(a, psi_t), c);
}

/// Posterior over one waypoint between ψ₀ and ψ_T.
inline GaussianBelief plan_single(const Vector& psi0, const Vector& psi_t, const Matrix& a, double c) {
  detail::check_c(c);
  if (psi0.dim() != psi_t.dim()) throw DimensionError("plan_single: endpoint dims differ");
  detail::check_square(a, psi0.dim(), "plan_single");
  const Matrix precision = detail::waypoint_precision_block(a, c);
  const Vector eta = matvec_transposed(a, psi_t) + matvec(a, psi0);
  return GaussianBelief::canonical(eta, precision).to_moment();
}

/// Joint precision and shift of n waypoints: diagonal blocks
/// (c/(c+1))AᵀA + ((c+1)/c)I, sub-diagonal -A, super-diagonal -Aᵀ,
/// η = (Aψ₀, 0, ..., 0, Aᵀψ_T) with both ends landing on the same block when n = 1.
struct ChainSystem {
  BlockTridiagonal precision;
  Vector eta;
};

inline ChainSystem chain_system(const Vector& psi0, const Vector& psi_t, std::size_t n, const Matrix& a,
                                double c) {
  detail::check_c(c);
  if (n == 0) throw Error("plan_chain: need at least one waypoint");
  if (psi0.dim() != psi_t.dim()) throw DimensionError("plan_chain: endpoint dims differ");
  const std::size_t k = psi0.dim();
  detail::check_square(a, k, "plan_chain");
  ChainSystem sys;
  sys.precision.n = n;
  sys.precision.block_dim = k;
  const Matrix diag = detail::waypoint_precision_block(a, c);
  const Matrix neg_a = -1.0 * a;
  const Matrix neg_at = -1.0 * transpose(a);
  sys.precision.diag.assign(n, diag);
  sys.precision.lower.assign(n - 1, neg_a);
  sys.precision.upper.assign(n - 1, neg_at);
  sys.eta = Vector(n * k);
  const Vector head = matvec(a, psi0);
  const Vector tail = matvec_transposed(a, psi_t);
  for (std::size_t r = 0; r < k; ++r) {
    sys.eta[r] += head[r];
    sys.eta[(n - 1) * k + r] += tail[r];
  }
  return sys;
}

/// Marginal posteriors of n waypoints between ψ₀ and ψ_T.
inline PlanResult plan_chain(const Vector& psi0, const Vector& psi_t, std::size_t n, const Matrix& a,
                             double c) {
  const ChainSystem sys = chain_system(psi0, psi_t, n, a, c);
  const std::size_t k = psi0.dim();
  Vector means;
  std::vector<Matrix> covs;
  try {
    means = block_tridiag_solve(sys.precision, sys.eta);
    covs = block_tridiag_marginal_covs(sys.precision);
  } catch (const NotPositiveDefiniteError& e) {
    throw NotPositiveDefiniteError(
        e.block(), "plan_chain: waypoint precision is not positive definite at block " +
                       std::to_string(e.block()));
  }
  PlanResult out;
  for (std::size_t i = 0; i < n; ++i) {
    Vector m(k);
    for (std::size_t r = 0; r < k; ++r) m[r] = means[i * k + r];
    out.waypoints.push_back(GaussianBelief::moment(std::move(m), std::move(covs[i])));
  }
  return out;
}

/// Waypoint means (1 - λ(i))·Aψ₀ + λ(i)·Aᵀψ_T with λ(i) = i/(n+1).
/// Covariances are set to ½I, the large-c limit of a single waypoint, and
/// flagged as approximate.
inline PlanResult interpolate_special(const Vector& psi0, const Vector& psi_t, std::size_t n,
                                      const Matrix& a) {
  if (n == 0) throw Error("interpolate_special: need at least one waypoint");
  if (psi0.dim() != psi_t.dim()) throw DimensionError("interpolate_special: endpoint dims differ");
  detail::check_square(a, psi0.dim(), "interpolate_special");
  const Vector head = matvec(a, psi0);
  const Vector tail = matvec_transposed(a, psi_t);
  PlanResult out;
  out.approximate_covariances = true;
  for (std::size_t i = 1; i <= n; ++i) {
    const double lam = static_cast<double>(i) / static_cast<double>(n + 1);
    out.interpolation_weights.push_back(lam);
    out.waypoints.push_back(
        GaussianBelief::moment((1.0 - lam) * head + lam * tail, 0.5 * Matrix::identity(psi0.dim())));
  }
  return out;
}

/// Exact multivariate normal log density.
inline double log_density(const GaussianBelief& belief, const Vector& x) {
  const GaussianBelief m = belief.to_moment();
  if (x.dim() != m.dim()) throw DimensionError("log_density: point dim does not match belief");
  if (!is_symmetric(m.cov(), 1e-10)) throw NotPositiveDefiniteError(0, "log_density: covariance is not symmetric");
  const Matrix l = cholesky(m.cov());
  const Vector diff = x - m.mean();
  const Vector sol = cholesky_solve(l, diff);
  const double k = static_cast<double>(x.dim());
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + cholesky_logdet(l) + dot(diff, sol));
}

/// Precomputed evaluator for scoring many points under one belief.
class DensityEvaluator {
 public:
  explicit DensityEvaluator(const GaussianBelief& belief) : belief_(belief.to_moment()) {
    chol_ = cholesky(belief_.cov());
    const double k = static_cast<double>(belief_.dim());
    constant_ = -0.5 * (k * std::log(2.0 * std::numbers::pi) + cholesky_logdet(chol_));
  }
  double operator()(const Vector& x) const {
    const Vector diff = x - belief_.mean();
    return constant_ - 0.5 * dot(diff, cholesky_solve(chol_, diff));
  }

 private:
  GaussianBelief belief_;
  Matrix chol_;
  double constant_ = 0.0;
};

}  // namespace gmc
