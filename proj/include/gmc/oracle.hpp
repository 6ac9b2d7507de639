#pragma once

// Finite-state Markov chains with exact discounted occupancies. Used to check
// that a directly parameterised critic trained with symmetrized infoNCE
// converges to the log probability ratio, and to check the uniformity /
// kernel-entropy identity.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/dataset.hpp"
#include "gmc/objective.hpp"
#include "gmc/rng.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

struct TabularChain {
  Matrix transition;  // row-stochastic
  double gamma = 0.9;
  Vector initial_dist;

  std::size_t num_states() const { return transition.rows(); }

  void validate() const {
    const std::size_t s = num_states();
    if (s == 0 || !transition.is_square()) throw Error("chain: transition matrix must be square and nonempty");
    if (initial_dist.dim() != s) throw DimensionError("chain: initial distribution has wrong size");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("chain: gamma must lie in (0, 1)");
    for (std::size_t r = 0; r < s; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < s; ++c) {
        if (transition(r, c) < 0.0) throw Error("chain: negative transition probability");
        sum += transition(r, c);
      }
      if (std::abs(sum - 1.0) > 1e-12) throw Error("chain: row " + std::to_string(r) + " does not sum to 1");
    }
    double total = 0.0;
    for (double p : initial_dist) {
      if (p < 0.0) throw Error("chain: negative initial probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw Error("chain: initial distribution does not sum to 1");
  }
};

struct TabularCritic {
  Matrix f;  // f(x, x⁺)
};

/// (1-γ)·Σ_{t≥0} γᵗ Pᵗ = (1-γ)(I - γP)⁻¹. Row x₀ is the occupancy from x₀;
/// the t = 0 term puts weight (1-γ) on x₀ itself.
inline Matrix discounted_occupancy(const TabularChain& chain) {
  if (!(chain.gamma > 0.0 && chain.gamma < 1.0)) throw Error("discounted_occupancy: gamma must lie in (0, 1)");
  const std::size_t s = chain.num_states();
  const Matrix m = Matrix::identity(s) - chain.gamma * chain.transition;
  return (1.0 - chain.gamma) * dense_inverse(m);
}

/// Stationary distribution by power iteration on the lazy chain (I+P)/2.
inline Vector stationary_distribution(const Matrix& transition, int iterations = 20000) {
  const std::size_t s = transition.rows();
  Vector p(s, 1.0 / static_cast<double>(s));
  for (int it = 0; it < iterations; ++it) {
    Vector next = matvec_transposed(transition, p);
    double diff = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      next[i] = 0.5 * (next[i] + p[i]);
      diff = std::max(diff, std::abs(next[i] - p[i]));
    }
    p = std::move(next);
    if (diff < 1e-15) break;
  }
  double total = 0.0;
  for (double v : p) total += v;
  return (1.0 / total) * p;
}

/// Random chain with Dirichlet(1)-like rows; initial distribution = stationary.
inline TabularChain random_chain(std::size_t num_states, double gamma, std::uint64_t seed) {
  Rng rng(seed);
  TabularChain chain;
  chain.gamma = gamma;
  chain.transition = Matrix(num_states, num_states);
  for (std::size_t r = 0; r < num_states; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_states; ++c) {
      double u;
      do {
        u = rng.uniform();
      } while (u <= 0.0);
      chain.transition(r, c) = -std::log(u);
      sum += chain.transition(r, c);
    }
    for (std::size_t c = 0; c < num_states; ++c) chain.transition(r, c) /= sum;
    // exact normalisation of the row so it sums to 1 within rounding
    double fix = 1.0;
    for (std::size_t c = 0; c + 1 < num_states; ++c) fix -= chain.transition(r, c);
    chain.transition(r, num_states - 1) = fix;
  }
  chain.initial_dist = stationary_distribution(chain.transition);
  return chain;
}

/// Marginal of x⁺ induced by x ~ initial_dist, x⁺ ~ occupancy row.
inline Vector positive_marginal(const TabularChain& chain, const Matrix& occupancy) {
  return matvec_transposed(occupancy, chain.initial_dist);
}

namespace detail {

inline std::size_t sample_categorical(Rng& rng, std::span<const double> probs) {
  double u = rng.uniform();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return 0;
}

}  // namespace detail

struct TabularFitConfig {
  std::size_t batch_size = 512;
  std::size_t steps = 20000;
  double learning_rate = 0.05;
  double final_learning_rate = 0.001;  // cosine decay target
  std::uint64_t seed = 0;
  double init_value = 0.0;
};

/// Fits an S×S critic table by Adam ascent on the symmetrized infoNCE
/// objective with x ~ initial_dist and x⁺ ~ occupancy(x, ·).
inline TabularCritic fit_tabular_critic(const TabularChain& chain, const TabularFitConfig& cfg) {
  chain.validate();
  const std::size_t s = chain.num_states();
  if (s < 2) throw Error("fit_tabular_critic: need at least 2 states");
  if (cfg.batch_size < 2) throw Error("fit_tabular_critic: batch_size must be >= 2");
  const Matrix occ = discounted_occupancy(chain);
  Rng rng(cfg.seed);
  TabularCritic critic{Matrix(s, s, cfg.init_value)};
  Matrix m(s, s), v(s, s);
  const std::size_t b = cfg.batch_size;
  std::vector<std::size_t> xs(b), ys(b);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t i = 0; i < b; ++i) {
      xs[i] = detail::sample_categorical(rng, chain.initial_dist.span());
      ys[i] = detail::sample_categorical(rng, occ.row(xs[i]));
    }
    // Logits depend on the pair only through the states, so the B×B softmaxes
    // collapse to per-state counts: O(B·S) per step.
    std::vector<double> count_x(s, 0.0), count_y(s, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      count_x[xs[i]] += 1.0;
      count_y[ys[i]] += 1.0;
    }
    Matrix ef(s, s);
    for (std::size_t idx = 0; idx < s * s; ++idx) ef.data()[idx] = std::exp(critic.f.data()[idx]);
    Matrix grad(s, s);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t x = xs[i], y = ys[i];
      grad(x, y) -= 2.0 * inv_b;
      // row term: negatives are y_j, j ≠ i
      double row_sum = -ef(x, y);
      for (std::size_t yy = 0; yy < s; ++yy) row_sum += count_y[yy] * ef(x, yy);
      for (std::size_t yy = 0; yy < s; ++yy) {
        const double n_neg = count_y[yy] - (yy == y ? 1.0 : 0.0);
        if (n_neg > 0.0) grad(x, yy) += inv_b * n_neg * ef(x, yy) / row_sum;
      }
      // column term: negatives are x_j, j ≠ i
      double col_sum = -ef(x, y);
      for (std::size_t xx = 0; xx < s; ++xx) col_sum += count_x[xx] * ef(xx, y);
      for (std::size_t xx = 0; xx < s; ++xx) {
        const double n_neg = count_x[xx] - (xx == x ? 1.0 : 0.0);
        if (n_neg > 0.0) grad(xx, y) += inv_b * n_neg * ef(xx, y) / col_sum;
      }
    }
    bool finite = true;
    const double progress = static_cast<double>(step - 1) / static_cast<double>(std::max<std::size_t>(1, cfg.steps - 1));
    const double lr = cfg.final_learning_rate +
                      0.5 * (cfg.learning_rate - cfg.final_learning_rate) * (1.0 + std::cos(std::numbers::pi * progress));
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t idx = 0; idx < s * s; ++idx) {
      const double g = grad.data()[idx];
      m.data()[idx] = beta1 * m.data()[idx] + (1 - beta1) * g;
      v.data()[idx] = beta2 * v.data()[idx] + (1 - beta2) * g * g;
      critic.f.data()[idx] -= lr * (m.data()[idx] / bc1) / (std::sqrt(v.data()[idx] / bc2) + eps);
      finite = finite && std::isfinite(critic.f.data()[idx]);
    }
    if (!finite) throw Error("fit_tabular_critic: critic diverged at step " + std::to_string(step));
  }
  return critic;
}

inline TabularCritic fit_tabular_critic(const TabularChain& chain, std::size_t batch_size,
                                        std::size_t steps, std::uint64_t seed) {
  TabularFitConfig cfg;
  cfg.batch_size = batch_size;
  cfg.steps = steps;
  cfg.seed = seed;
  return fit_tabular_critic(chain, cfg);
}

struct Assumption2Report {
  double max_abs_dev = 0.0;   // after removing the best constant offset
  double offset = 0.0;        // mean of f - log ratio over compared pairs
  double row_offset_variance = 0.0;  // variance of per-row mean offsets
  std::size_t compared = 0;
  std::size_t excluded_zero_probability = 0;

  std::string to_text() const {
    std::ostringstream os;
    os.precision(10);
    os << "max_abs_dev: " << max_abs_dev << "\noffset: " << offset
       << "\nrow_offset_variance: " << row_offset_variance << "\ncompared_pairs: " << compared
       << "\nexcluded_zero_probability: " << excluded_zero_probability << "\n";
    return os.str();
  }
};

/// Compares f(x, x⁺) with log(p(x⁺|x)/p(x⁺)) up to one global constant.
inline Assumption2Report verify_assumption2(const TabularCritic& critic, const TabularChain& chain) {
  chain.validate();
  const std::size_t s = chain.num_states();
  if (critic.f.rows() != s || critic.f.cols() != s)
    throw DimensionError("verify_assumption2: critic and chain sizes differ");
  const Matrix occ = discounted_occupancy(chain);
  const Vector marginal = positive_marginal(chain, occ);
  Matrix g(s, s);
  std::vector<std::vector<bool>> used(s, std::vector<bool>(s, false));
  Assumption2Report rep;
  double total = 0.0;
  for (std::size_t x = 0; x < s; ++x)
    for (std::size_t y = 0; y < s; ++y) {
      if (!(occ(x, y) > 0.0) || !(marginal[y] > 0.0)) {
        ++rep.excluded_zero_probability;
        continue;
      }
      g(x, y) = critic.f(x, y) - std::log(occ(x, y) / marginal[y]);
      used[x][y] = true;
      total += g(x, y);
      ++rep.compared;
    }
  if (rep.compared == 0) return rep;
  rep.offset = total / static_cast<double>(rep.compared);
  std::vector<double> row_means;
  for (std::size_t x = 0; x < s; ++x) {
    double rs = 0.0;
    std::size_t rn = 0;
    for (std::size_t y = 0; y < s; ++y)
      if (used[x][y]) {
        rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(g(x, y) - rep.offset));
        rs += g(x, y);
        ++rn;
      }
    if (rn) row_means.push_back(rs / static_cast<double>(rn));
  }
  double rm = 0.0;
  for (double r : row_means) rm += r;
  rm /= static_cast<double>(row_means.size());
  for (double r : row_means) rep.row_offset_variance += (r - rm) * (r - rm);
  rep.row_offset_variance /= static_cast<double>(row_means.size());
  return rep;
}

/// The exact optimum log(p(x⁺|x)/p(x⁺)), for tests and reports.
inline TabularCritic analytic_critic(const TabularChain& chain) {
  const Matrix occ = discounted_occupancy(chain);
  const Vector marginal = positive_marginal(chain, occ);
  const std::size_t s = chain.num_states();
  TabularCritic c{Matrix(s, s)};
  for (std::size_t x = 0; x < s; ++x)
    for (std::size_t y = 0; y < s; ++y)
      c.f(x, y) = occ(x, y) > 0.0 ? std::log(occ(x, y) / marginal[y]) : 0.0;
  return c;
}

/// Simulates the chain from its initial distribution and stores each state
/// as a one-hot observation.
inline TrajectoryDataset chain_trajectories(const TabularChain& chain, std::size_t num_traj,
                                            std::size_t length, std::uint64_t seed) {
  chain.validate();
  Rng rng(seed);
  const std::size_t s = chain.num_states();
  TrajectoryDataset ds;
  ds.obs_dim = s;
  ds.meta = "chain";
  for (std::size_t j = 0; j < num_traj; ++j) {
    Trajectory t;
    t.id = static_cast<std::int64_t>(j);
    std::size_t state = detail::sample_categorical(rng, chain.initial_dist.span());
    for (std::size_t i = 0; i < length; ++i) {
      Vector o(s);
      o[state] = 1.0;
      t.observations.push_back(std::move(o));
      state = detail::sample_categorical(rng, chain.transition.row(state));
    }
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Uniformity term and leave-one-out Gaussian kernel entropy estimate.

struct UniformityEntropy {
  double uniformity = 0.0;        // mean_i log( mean_{j≠i} exp(-½‖ψ_i-ψ_j‖²) )
  double entropy_estimate = 0.0;  // -mean_i log p̂(ψ_i), p̂ = mean_{j≠i} N(ψ_i; ψ_j, I)
  std::size_t dim = 0;
};

inline UniformityEntropy uniformity_entropy_check(std::span<const Vector> psis) {
  const std::size_t n = psis.size();
  if (n < 3) throw Error("uniformity_entropy_check: need at least 3 samples");
  const std::size_t k = psis.front().dim();
  const double log_norm = 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
  const double log_nm1 = std::log(static_cast<double>(n - 1));
  std::vector<double> row(n);
  double uni = 0.0, loglik = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      row[j] = i == j ? 0.0 : -0.5 * squared_distance(psis[i].span(), psis[j].span());
    const double lse = detail::log_sum_exp_excluding(row, i);
    uni += lse - log_nm1;
    // log of the mixture density, evaluated on its own terms
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) row[j] -= log_norm;
    loglik += detail::log_sum_exp_excluding(row, i) - log_nm1;
  }
  UniformityEntropy out;
  out.uniformity = uni / static_cast<double>(n);
  out.entropy_estimate = -loglik / static_cast<double>(n);
  out.dim = k;
  return out;
}

}  // namespace gmc
