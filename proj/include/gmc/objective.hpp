#pragma once

// Symmetrized infoNCE without resubstitution, the expected-norm constraint
// with a dual-ascent multiplier, and the training loop.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/dataset.hpp"
#include "gmc/encoder.hpp"
#include "gmc/rng.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

/// φ(x_i) and ψ(x_i⁺) for a batch, one row per pair.
struct BatchReps {
  Matrix phis;
  Matrix psis_pos;

  std::size_t batch() const { return phis.rows(); }
};

struct InfoNceResult {
  double loss = 0.0;
  Matrix grad_phis;
  Matrix grad_psis_pos;
};

namespace detail {

inline double log_sum_exp_excluding(std::span<const double> xs, std::size_t skip) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < xs.size(); ++j)
    if (j != skip) m = std::max(m, xs[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < xs.size(); ++j)
    if (j != skip) s += std::exp(xs[j] - m);
  return m + std::log(s);
}

}  // namespace detail

/// Negated symmetrized infoNCE (a quantity to minimise) and its gradient.
///
/// Logits are L_ij = -½‖φ_i - ψ⁺_j‖². For every i the loss collects
///   -(L_ii - logΣ_{j≠i} exp L_ij) - (L_ii - logΣ_{j≠i} exp L_ji),
/// i.e. a row softmax and a column softmax that both leave the positive out
/// of the denominator.
inline InfoNceResult infonce_symmetrized_with_grad(const BatchReps& reps) {
  const std::size_t b = reps.batch();
  if (b < 2) throw Error("infonce: batch size must be at least 2");
  if (reps.psis_pos.rows() != b || reps.psis_pos.cols() != reps.phis.cols())
    throw DimensionError("infonce: phis and psis_pos differ in shape");
  const std::size_t k = reps.phis.cols();

  // -½‖φ_i - ψ_j‖² = φ_i·ψ_j - ½‖φ_i‖² - ½‖ψ_j‖²
  Matrix logits = matmul_transposed(reps.phis, reps.psis_pos);
  std::vector<double> half_phi(b), half_psi(b);
  for (std::size_t i = 0; i < b; ++i) {
    half_phi[i] = 0.5 * dot(reps.phis.row(i), reps.phis.row(i));
    half_psi[i] = 0.5 * dot(reps.psis_pos.row(i), reps.psis_pos.row(i));
  }
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j) logits(i, j) -= half_phi[i] + half_psi[j];

  // One exponential per entry: E_ij = exp(L_ij - m_i) with m_i the row max.
  // Column sums reuse E through the weights exp(m_i - M); a column whose sum
  // underflows is recomputed with its own shift.
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> row_max(b, neg_inf), row_sum(b, 0.0), row_lse(b), col_lse(b);
  Matrix e(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto l = logits.row(i);
    for (std::size_t j = 0; j < b; ++j)
      if (j != i) row_max[i] = std::max(row_max[i], l[j]);
    auto er = e.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      er[j] = j == i ? 0.0 : std::exp(l[j] - row_max[i]);
      row_sum[i] += er[j];
    }
    row_lse[i] = row_max[i] + std::log(row_sum[i]);
  }
  const double top = *std::max_element(row_max.begin(), row_max.end());
  std::vector<double> w(b), col_sum(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) w[i] = std::exp(row_max[i] - top);
  for (std::size_t i = 0; i < b; ++i) {
    const auto er = e.row(i);
    for (std::size_t j = 0; j < b; ++j) col_sum[j] += w[i] * er[j];
  }
  std::vector<double> column(b);
  for (std::size_t j = 0; j < b; ++j) {
    if (col_sum[j] > 1e-250) {
      col_lse[j] = top + std::log(col_sum[j]);
    } else {
      for (std::size_t i = 0; i < b; ++i) column[i] = logits(i, j);
      col_lse[j] = detail::log_sum_exp_excluding(column, j);
    }
  }

  InfoNceResult out;
  for (std::size_t i = 0; i < b; ++i) out.loss -= 2.0 * logits(i, i) - row_lse[i] - col_lse[i];

  // dLoss/dL_ij: -2 on the diagonal, row softmax + column softmax elsewhere.
  Matrix g(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto er = e.row(i);
    for (std::size_t j = 0; j < b; ++j) {
      if (i == j) {
        g(i, j) = -2.0;
      } else if (col_sum[j] > 1e-250) {
        g(i, j) = er[j] / row_sum[i] + er[j] * w[i] / col_sum[j];
      } else {
        g(i, j) = er[j] / row_sum[i] + std::exp(logits(i, j) - col_lse[j]);
      }
    }
  }

  // dL_ij/dφ_i = -(φ_i - ψ_j), dL_ij/dψ_j = (φ_i - ψ_j), so
  // gφ = G·Ψ - rowsum(G)∘Φ and gψ = Gᵀ·Φ - colsum(G)∘Ψ.
  out.grad_phis = matmul(g, reps.psis_pos);
  out.grad_psis_pos = matmul(transpose(g), reps.phis);
  for (std::size_t i = 0; i < b; ++i) {
    double rs = 0.0, cs = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      rs += g(i, j);
      cs += g(j, i);
    }
    auto gphi = out.grad_phis.row(i);
    auto gpsi = out.grad_psis_pos.row(i);
    const auto phi = reps.phis.row(i);
    const auto psi = reps.psis_pos.row(i);
    for (std::size_t d = 0; d < k; ++d) {
      gphi[d] -= rs * phi[d];
      gpsi[d] -= cs * psi[d];
    }
  }
  return out;
}

inline double infonce_symmetrized(const BatchReps& reps) {
  return infonce_symmetrized_with_grad(reps).loss;
}

/// Batch estimate of (1/k)·E‖ψ‖².
inline double norm_penalty(std::span<const Vector> psis, std::size_t k) {
  if (psis.empty()) throw Error("norm_penalty: empty batch");
  double s = 0.0;
  for (const auto& p : psis) s += dot(p, p);
  return s / (static_cast<double>(psis.size()) * static_cast<double>(k));
}

inline double norm_penalty(const Matrix& psis) {
  if (psis.rows() == 0) throw Error("norm_penalty: empty batch");
  double s = 0.0;
  for (double v : psis.values()) s += v * v;
  return s / (static_cast<double>(psis.rows()) * static_cast<double>(psis.cols()));
}

/// Projected dual ascent on the multiplier of (1/k)E‖ψ‖² ≤ c.
inline double dual_update(double lambda, double constraint_value, double c, double dual_step) {
  return std::max(0.0, lambda + dual_step * (constraint_value - c));
}

// ---------------------------------------------------------------------------
// Configuration

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 3e-4;
  std::size_t steps = 20000;
  double c = 1.0;
  double dual_step = 1e-3;
  double gamma = 0.97;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::vector<std::size_t> hidden_sizes{64, 64};
  std::size_t repr_dim = 8;
  double initial_lambda = 0.1;

  void validate() const {
    if (batch_size < 2) throw Error("config: batch_size must be >= 2");
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("config: gamma must lie in (0, 1)");
    if (!(c > 0.0)) throw Error("config: c must be positive");
    if (!(learning_rate > 0.0)) throw Error("config: learning_rate must be positive");
    if (dual_step < 0.0) throw Error("config: dual_step must be nonnegative");
    if (repr_dim == 0) throw Error("config: repr_dim must be positive");
  }
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Applies `key = value` lines (or `key: value`); '#' starts a comment.
/// Unknown keys are rejected.
inline void apply_config_text(TrainConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto sep = line.find_first_of("=:");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string{};
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    if (trim(line).empty()) continue;
    if (sep == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, sep)), value = trim(line.substr(sep + 1));
    try {
      if (key == "batch_size") cfg.batch_size = std::stoul(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "steps") cfg.steps = std::stoul(value);
      else if (key == "c") cfg.c = std::stod(value);
      else if (key == "dual_step") cfg.dual_step = std::stod(value);
      else if (key == "gamma") cfg.gamma = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "optimizer") {
        if (value == "adam") cfg.optimizer = OptimizerKind::adam;
        else if (value == "sgd") cfg.optimizer = OptimizerKind::sgd;
        else throw ConfigError("config line " + std::to_string(line_no) + ": optimizer must be sgd or adam");
      } else if (key == "hidden_sizes") {
        cfg.hidden_sizes.clear();
        std::istringstream hs(value);
        std::string tok;
        while (std::getline(hs, tok, ',')) {
          tok = trim(tok);
          if (!tok.empty()) cfg.hidden_sizes.push_back(std::stoul(tok));
        }
      } else if (key == "repr_dim") cfg.repr_dim = std::stoul(value);
      else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
}

inline TrainConfig load_train_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  apply_config_text(base, in);
  return base;
}

inline std::string format_config(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size = " << cfg.batch_size << "\nlearning_rate = " << cfg.learning_rate
     << "\nsteps = " << cfg.steps << "\nc = " << cfg.c << "\ndual_step = " << cfg.dual_step
     << "\ngamma = " << cfg.gamma << "\nseed = " << cfg.seed
     << "\noptimizer = " << (cfg.optimizer == OptimizerKind::adam ? "adam" : "sgd")
     << "\nhidden_sizes = ";
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i) os << (i ? "," : "") << cfg.hidden_sizes[i];
  os << "\nrepr_dim = " << cfg.repr_dim << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Optimisers

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, const EncoderPair& like)
      : kind_(kind), lr_(lr), m_(GradientBundle::zeros_like(like)), v_(GradientBundle::zeros_like(like)) {}

  void step(EncoderPair& enc, GradientBundle& grad) {
    ++t_;
    std::vector<std::span<double>> params, grads, ms, vs;
    for_each_tensor(enc, [&](std::span<double> s) { params.push_back(s); });
    for_each_tensor(grad, [&](std::span<double> s) { grads.push_back(s); });
    for_each_tensor(m_, [&](std::span<double> s) { ms.push_back(s); });
    for_each_tensor(v_, [&](std::span<double> s) { vs.push_back(s); });
    if (kind_ == OptimizerKind::sgd) {
      for (std::size_t t = 0; t < params.size(); ++t)
        for (std::size_t i = 0; i < params[t].size(); ++i) params[t][i] -= lr_ * grads[t][i];
      return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        const double g = grads[t][i];
        ms[t][i] = beta1 * ms[t][i] + (1.0 - beta1) * g;
        vs[t][i] = beta2 * vs[t][i] + (1.0 - beta2) * g * g;
        params[t][i] -= lr_ * (ms[t][i] / bc1) / (std::sqrt(vs[t][i] / bc2) + eps);
      }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  GradientBundle m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

/// Loss actually minimised per step:
///   infonce_symmetrized / B + λ · (1/k)·mean‖ψ‖²
/// where the penalty covers ψ of both x and x⁺ in the batch.
struct StepLoss {
  double total = 0.0;
  double infonce = 0.0;
  double constraint = 0.0;
  PairOutputGrads grads;
};

inline StepLoss regularized_loss(const EncoderPair& enc, const PairForward& fwd) {
  const std::size_t b = fwd.batch, k = enc.repr_dim();
  const auto nce = infonce_symmetrized_with_grad({fwd.phi_x, fwd.psi_pos});
  StepLoss out;
  out.infonce = nce.loss;
  const double sq = norm_penalty(fwd.psi_x) + norm_penalty(fwd.psi_pos);
  out.constraint = 0.5 * sq;
  out.total = nce.loss / static_cast<double>(b) + enc.dual_lambda * out.constraint;
  const double inv_b = 1.0 / static_cast<double>(b);
  // d/dψ of λ·(Σ‖ψ‖²)/(2B·k) = λ·ψ/(B·k)
  const double pen = enc.dual_lambda / (static_cast<double>(b) * static_cast<double>(k));
  out.grads.phi_x = inv_b * nce.grad_phis;
  out.grads.psi_pos = inv_b * nce.grad_psis_pos + pen * fwd.psi_pos;
  out.grads.psi_x = pen * fwd.psi_x;
  return out;
}

struct TrainRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double infonce = 0.0;
  double constraint = 0.0;
  double lambda = 0.0;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::uint64_t step)
      : Error("non-finite loss at step " + std::to_string(step)), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

using TrainCallback = std::function<void(const TrainRecord&)>;

/// Continues training `enc` for cfg.steps steps on the training split.
inline EncoderPair train(const TrajectoryDataset& ds, const TrainConfig& cfg, EncoderPair enc,
                         const TrainCallback& on_step = {}) {
  cfg.validate();
  if (cfg.steps == 0) return enc;
  ds.validate();
  if (enc.input_dim() != ds.obs_dim)
    throw DimensionError("train: encoder input dim does not match dataset obs_dim");
  const PairSampler sampler(ds, cfg.gamma);
  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 17 + enc.step);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, enc);
  Matrix xs(cfg.batch_size, ds.obs_dim), xs_pos(cfg.batch_size, ds.obs_dim);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const auto pair = sampler.sample(rng);
      std::copy(pair.x->begin(), pair.x->end(), xs.row(i).begin());
      std::copy(pair.x_pos->begin(), pair.x_pos->end(), xs_pos.row(i).begin());
    }
    const PairForward fwd = forward_pairs(enc, xs, xs_pos);
    const StepLoss loss = regularized_loss(enc, fwd);
    if (!std::isfinite(loss.total)) throw NonFiniteLossError(enc.step);
    GradientBundle grad = backward(enc, fwd, loss.grads);
    opt.step(enc, grad);
    enc.dual_lambda = dual_update(enc.dual_lambda, loss.constraint, enc.c, cfg.dual_step);
    ++enc.step;
    if (on_step) on_step({enc.step, loss.total, loss.infonce, loss.constraint, enc.dual_lambda});
  }
  return enc;
}

inline EncoderPair init_encoder_for(const TrajectoryDataset& ds, const TrainConfig& cfg) {
  return init_encoder(ds.obs_dim, cfg.hidden_sizes, cfg.repr_dim, Activation::tanh, cfg.seed, cfg.c,
                      cfg.initial_lambda);
}

inline EncoderPair train(const TrajectoryDataset& ds, const TrainConfig& cfg,
                         const TrainCallback& on_step = {}) {
  return train(ds, cfg, init_encoder_for(ds, cfg), on_step);
}

}  // namespace gmc
