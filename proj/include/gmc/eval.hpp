#pragma once

// Evaluation harnesses: representation moment checks, the verify report,
// waypoint MSE against true intermediate observations, the spiral
// prediction-structure probe, CSV inpainting and run manifests.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/control.hpp"
#include "gmc/encoder.hpp"
#include "gmc/envs.hpp"
#include "gmc/inference.hpp"
#include "gmc/nearest.hpp"
#include "gmc/oracle.hpp"
#include "gmc/pca.hpp"

namespace gmc {

inline std::string format_metric(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Representation moments

struct RepresentationMoments {
  std::size_t count = 0;
  std::size_t dim = 0;
  double mean_sq_per_dim = 0.0;  // (1/k)·mean‖ψ‖²
  double mean_norm = 0.0;        // ‖mean ψ‖
  double max_abs_offdiag_corr = 0.0;
  Vector per_dim_variance;
};

inline RepresentationMoments representation_moments(std::span<const Vector> psis) {
  if (psis.size() < 2) throw Error("representation_moments: need at least two samples");
  const std::size_t k = psis.front().dim();
  const double n = static_cast<double>(psis.size());
  RepresentationMoments m;
  m.count = psis.size();
  m.dim = k;
  Vector mean(k);
  double sq = 0.0;
  for (const auto& p : psis) {
    if (p.dim() != k) throw DimensionError("representation_moments: mixed dims");
    for (std::size_t d = 0; d < k; ++d) mean[d] += p[d];
    sq += dot(p, p);
  }
  mean = (1.0 / n) * mean;
  m.mean_sq_per_dim = sq / (n * static_cast<double>(k));
  m.mean_norm = norm(mean);
  Matrix cov(k, k);
  for (const auto& p : psis)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) cov(a, b) += (p[a] - mean[a]) * (p[b] - mean[b]);
  cov = (1.0 / (n - 1.0)) * cov;
  m.per_dim_variance = Vector(k);
  for (std::size_t a = 0; a < k; ++a) m.per_dim_variance[a] = cov(a, a);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      const double denom = std::sqrt(cov(a, a) * cov(b, b));
      const double r = denom > 0.0 ? cov(a, b) / denom : 0.0;
      m.max_abs_offdiag_corr = std::max(m.max_abs_offdiag_corr, std::abs(r));
    }
  return m;
}

// ---------------------------------------------------------------------------
// Verify report

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string threshold;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  void add(std::string name, bool passed, double measured, std::string threshold) {
    checks.push_back({std::move(name), passed, measured, std::move(threshold)});
  }
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
  }
  std::string to_text() const {
    std::ostringstream os;
    os << "check\tresult\tmeasured\tthreshold\n";
    for (const auto& c : checks)
      os << c.name << '\t' << (c.passed ? "PASS" : "FAIL") << '\t' << format_metric(c.measured) << '\t'
         << c.threshold << '\n';
    return os.str();
  }
};

struct OracleSuiteConfig {
  std::size_t num_states = 5;
  double gamma = 0.9;
  std::uint64_t seed = 0;
  TabularFitConfig fit;
  double max_deviation = 0.05;
};

/// Checks that need no checkpoint: the two-state occupancy closed form,
/// the tabular critic against the exact log ratio, and the
/// uniformity/entropy identity on random samples.
inline VerifyReport run_oracle_suite(const OracleSuiteConfig& cfg) {
  VerifyReport rep;
  {
    TabularChain flip;
    flip.transition = Matrix{{0.0, 1.0}, {1.0, 0.0}};
    flip.gamma = 0.5;
    flip.initial_dist = Vector{0.5, 0.5};
    const Matrix occ = discounted_occupancy(flip);
    const double dev = std::max(std::abs(occ(0, 0) - 2.0 / 3.0), std::abs(occ(0, 1) - 1.0 / 3.0));
    rep.add("occupancy_two_state", dev <= 1e-12, dev, "<= 1e-12");
  }
  {
    const TabularChain chain = random_chain(cfg.num_states, cfg.gamma, cfg.seed);
    TabularFitConfig fit = cfg.fit;
    fit.seed = cfg.seed;
    const Assumption2Report a2 = verify_assumption2(fit_tabular_critic(chain, fit), chain);
    rep.add("critic_log_ratio_max_dev", a2.max_abs_dev <= cfg.max_deviation, a2.max_abs_dev,
            "<= " + format_metric(cfg.max_deviation));
    rep.add("critic_row_offset_variance", true, a2.row_offset_variance, "reported");
  }
  {
    Rng rng(cfg.seed + 1);
    std::vector<Vector> pts;
    for (int i = 0; i < 64; ++i) {
      Vector v(8);
      for (std::size_t d = 0; d < 8; ++d) v[d] = 2.0 * rng.normal();
      pts.push_back(std::move(v));
    }
    const UniformityEntropy ue = uniformity_entropy_check(pts);
    const double dev = std::abs(ue.uniformity + ue.entropy_estimate - 4.0 * std::log(2.0 * std::numbers::pi));
    rep.add("uniformity_entropy_identity", dev <= 1e-10, dev, "<= 1e-10");
  }
  return rep;
}

struct MomentBands {
  double low = 0.8;        // × c
  double high = 1.2;       // × c
  double mean_norm = 0.2;  // × √(ck)
  double max_corr = 0.25;
};

inline void add_moment_checks(VerifyReport& rep, const RepresentationMoments& m, double c,
                              const MomentBands& bands = {}) {
  rep.add("mean_sq_norm_per_dim", m.mean_sq_per_dim >= bands.low * c && m.mean_sq_per_dim <= bands.high * c,
          m.mean_sq_per_dim, "in [" + format_metric(bands.low * c) + ", " + format_metric(bands.high * c) + "]");
  const double norm_bound = bands.mean_norm * std::sqrt(c * static_cast<double>(m.dim));
  rep.add("mean_vector_norm", m.mean_norm <= norm_bound, m.mean_norm, "<= " + format_metric(norm_bound));
  rep.add("max_abs_offdiag_corr", m.max_abs_offdiag_corr <= bands.max_corr, m.max_abs_offdiag_corr,
          "<= " + format_metric(bands.max_corr));
  for (std::size_t d = 0; d < m.dim; ++d)
    rep.add("variance_dim_" + std::to_string(d), true, m.per_dim_variance[d], "reported");
}

/// Moment checks and the uniformity/entropy identity on encoded validation data.
inline VerifyReport run_checkpoint_checks(const EncoderPair& enc, const TrajectoryDataset& ds,
                                          std::size_t max_identity_samples = 512) {
  const std::vector<Vector> obs = ds.observations(Split::validation);
  if (obs.size() < 2) throw Error("verify: dataset has fewer than two validation observations");
  const std::vector<Vector> psis = psi_forward_batch(enc, obs);
  VerifyReport rep;
  add_moment_checks(rep, representation_moments(psis), enc.c);
  const std::size_t m = std::min(max_identity_samples, psis.size());
  const std::span<const Vector> head(psis.data(), m);
  const UniformityEntropy ue = uniformity_entropy_check(head);
  const double target = 0.5 * static_cast<double>(enc.repr_dim()) * std::log(2.0 * std::numbers::pi);
  const double dev = std::abs(ue.uniformity + ue.entropy_estimate - target);
  rep.add("uniformity_entropy_identity", dev <= 1e-10, dev, "<= 1e-10");
  rep.add("uniformity_term", true, ue.uniformity, "reported");
  return rep;
}

// ---------------------------------------------------------------------------
// Waypoint MSE

enum class PlanMode { special, chain };

inline PlanMode parse_plan_mode(const std::string& s) {
  if (s == "special") return PlanMode::special;
  if (s == "chain") return PlanMode::chain;
  throw Error("unknown plan mode: " + s);
}

inline std::vector<Vector> plan_means(const EncoderPair& enc, const Vector& psi0, const Vector& psi_t,
                                      std::size_t n, PlanMode mode) {
  const PlanResult plan =
      mode == PlanMode::special ? interpolate_special(psi0, psi_t, n, enc.a_matrix) : plan_chain(psi0, psi_t, n, enc.a_matrix, enc.c);
  std::vector<Vector> out;
  for (const auto& w : plan.waypoints) out.push_back(w.mean());
  return out;
}

/// Ground-truth frame for waypoint i of n on a trajectory of length T.
inline std::size_t true_waypoint_index(std::size_t i, std::size_t n, std::size_t length) {
  const double pos = static_cast<double>(i) * static_cast<double>(length - 1) / static_cast<double>(n + 1);
  return static_cast<std::size_t>(std::llround(pos));
}

inline const std::vector<std::string>& waypoint_methods() {
  static const std::vector<std::string> m{"contrastive", "pca-interp", "obs-interp"};
  return m;
}

/// Retrieval-based waypoint predictors sharing one observation bank.
class WaypointPredictor {
 public:
  WaypointPredictor(const EncoderPair& enc, std::vector<Vector> bank, std::size_t pca_components, PlanMode mode)
      : enc_(enc), mode_(mode), bank_(encode_bank(enc, bank)), pca_(bank, pca_components) {}

  std::vector<Vector> predict(const std::string& method, const Vector& start, const Vector& goal,
                              std::size_t n) const {
    if (method == "contrastive") {
      std::vector<Vector> out;
      const auto means = plan_means(enc_, psi_forward(enc_, start), psi_forward(enc_, goal), n, mode_);
      for (const auto& m : means) out.push_back(bank_.observations[nearest_index(m, bank_.psis)]);
      return out;
    }
    if (method == "pca-interp") return pca_.waypoints(start, goal, n);
    if (method == "obs-interp") return interpolate_observation_waypoints(start, goal, n, bank_.observations);
    throw Error("unknown waypoint method: " + method);
  }

  const std::vector<Vector>& bank() const { return bank_.observations; }

 private:
  const EncoderPair& enc_;
  PlanMode mode_;
  EncodedBank bank_;
  PcaPlanner pca_;
};

struct WaypointEvalConfig {
  std::size_t n_waypoints = 5;
  PlanMode mode = PlanMode::special;
  std::size_t pca_components = 8;
};

struct WaypointEvalResult {
  std::map<std::string, double> mse;                       // per element, averaged over pairs and waypoints
  std::map<std::string, std::vector<double>> per_index;   // same, per waypoint index
  std::size_t num_pairs = 0;
  std::size_t skipped = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "method\twaypoint\tmse\n";
    for (const auto& [method, v] : per_index) {
      for (std::size_t i = 0; i < v.size(); ++i) os << method << '\t' << i + 1 << '\t' << format_metric(v[i]) << '\n';
      os << method << "\tall\t" << format_metric(mse.at(method)) << '\n';
    }
    os << "# pairs=" << num_pairs << " skipped=" << skipped << '\n';
    return os.str();
  }
};

/// For every validation trajectory with at least three observations, plans
/// n waypoints from its first to its last observation and scores each
/// method against the frames at round(i·(T-1)/(n+1)).
inline WaypointEvalResult evaluate_waypoints(const EncoderPair& enc, const TrajectoryDataset& ds,
                                             const WaypointEvalConfig& cfg) {
  if (cfg.n_waypoints == 0) throw Error("eval-waypoints: n must be at least 1");
  const auto val = ds.split_view(Split::validation);
  std::vector<Vector> bank = ds.observations(Split::validation);
  if (val.empty() || bank.empty()) throw Error("eval-waypoints: validation set is empty");
  const WaypointPredictor predictor(enc, bank, cfg.pca_components, cfg.mode);
  WaypointEvalResult res;
  const auto& methods = waypoint_methods();
  for (const auto& m : methods) res.per_index[m].assign(cfg.n_waypoints, 0.0);
  const double d = static_cast<double>(ds.obs_dim);
  for (const Trajectory* t : val) {
    const std::size_t len = t->observations.size();
    if (len < 3) {
      ++res.skipped;
      continue;
    }
    ++res.num_pairs;
    for (const auto& m : methods) {
      const auto wps = predictor.predict(m, t->observations.front(), t->observations.back(), cfg.n_waypoints);
      for (std::size_t i = 0; i < cfg.n_waypoints; ++i) {
        const Vector& truth = t->observations[true_waypoint_index(i + 1, cfg.n_waypoints, len)];
        res.per_index[m][i] += squared_distance(wps[i].span(), truth.span()) / d;
      }
    }
  }
  if (res.num_pairs == 0) throw Error("eval-waypoints: no validation trajectory has at least three observations");
  for (const auto& m : methods) {
    double total = 0.0;
    for (auto& v : res.per_index[m]) {
      v /= static_cast<double>(res.num_pairs);
      total += v;
    }
    res.mse[m] = total / static_cast<double>(cfg.n_waypoints);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Prediction structure

struct PredictionStructureConfig {
  std::size_t top_k = 10;
  std::size_t num_probes = 200;
  std::size_t head_margin = 5;   // probes start at this index
  std::size_t tail_margin = 15;  // and stop this many steps before the end
  std::uint64_t seed = 0;
};

struct PredictionStructureResult {
  std::size_t probes = 0;
  std::size_t model_ahead = 0;
  std::size_t baseline_ahead = 0;

  double model_fraction() const { return probes ? static_cast<double>(model_ahead) / static_cast<double>(probes) : 0.0; }
  double baseline_fraction() const {
    return probes ? static_cast<double>(baseline_ahead) / static_cast<double>(probes) : 0.0;
  }
};

namespace detail {

inline std::vector<std::size_t> top_indices(const std::vector<double>& score, std::size_t k) {
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    return score[a] != score[b] ? score[a] > score[b] : a < b;
  });
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// A probe counts as "ahead" when all of its top-k bank points have a larger
/// distance from the origin than the probe itself. The model ranks bank points
/// by log density under the future prediction; the baseline ranks them by
/// negative Euclidean distance to the probe. The probe's own trajectory is
/// left out of the bank.
inline PredictionStructureResult spiral_prediction_structure(const EncoderPair& enc, const TrajectoryDataset& ds,
                                                             const PredictionStructureConfig& cfg) {
  const auto val = ds.split_view(Split::validation);
  std::vector<const Trajectory*> eligible;
  for (const Trajectory* t : val)
    if (t->observations.size() > cfg.head_margin + cfg.tail_margin) eligible.push_back(t);
  if (eligible.size() < 2) throw Error("prediction structure: need at least two long validation trajectories");
  std::vector<Vector> bank_obs;
  std::vector<std::size_t> owner;
  for (std::size_t j = 0; j < eligible.size(); ++j)
    for (const auto& o : eligible[j]->observations) {
      bank_obs.push_back(o);
      owner.push_back(j);
    }
  const std::vector<Vector> bank_psi = psi_forward_batch(enc, bank_obs);
  Rng rng(cfg.seed);
  PredictionStructureResult res;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  std::vector<double> model_score(bank_obs.size()), base_score(bank_obs.size());
  for (std::size_t p = 0; p < cfg.num_probes; ++p) {
    const std::size_t j = rng.uniform_index(eligible.size());
    const auto& traj = eligible[j]->observations;
    const std::size_t span = traj.size() - cfg.head_margin - cfg.tail_margin;
    const std::size_t t = cfg.head_margin + rng.uniform_index(span);
    const Vector& probe = traj[t];
    const double probe_r = norm(probe);
    const DensityEvaluator density(predict_future(psi_forward(enc, probe), enc.a_matrix, enc.c));
    for (std::size_t b = 0; b < bank_obs.size(); ++b) {
      const bool own = owner[b] == j;
      model_score[b] = own ? neg_inf : density(bank_psi[b]);
      base_score[b] = own ? neg_inf : -squared_distance(bank_obs[b].span(), probe.span());
    }
    auto all_ahead = [&](const std::vector<double>& score) {
      for (std::size_t b : detail::top_indices(score, cfg.top_k))
        if (!(norm(bank_obs[b]) > probe_r)) return false;
      return true;
    };
    ++res.probes;
    if (all_ahead(model_score)) ++res.model_ahead;
    if (all_ahead(base_score)) ++res.baseline_ahead;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Inpainting

struct InpaintWindow {
  std::int64_t start_row = 0;
  std::vector<std::size_t> rows;      // absolute row index of each inpainted point
  std::vector<Vector> truth;          // original units, kept columns
  std::vector<Vector> predicted;
  std::vector<Vector> baseline;       // observation-space interpolation
};

struct InpaintResult {
  std::vector<InpaintWindow> windows;
  double mse_model = 0.0;     // normalised units
  double mse_baseline = 0.0;
  CsvReport report;

  std::string to_text() const {
    std::ostringstream os;
    os << "window\trow";
    for (const auto& c : report.kept_columns) os << "\ttrue_" << c << "\tpred_" << c << "\tinterp_" << c;
    for (const auto& c : report.dropped_constant) os << "\ttrue_" << c << "\tpred_" << c << "\tinterp_" << c;
    os << '\n';
    for (std::size_t w = 0; w < windows.size(); ++w) {
      const auto& win = windows[w];
      for (std::size_t i = 0; i < win.rows.size(); ++i) {
        os << w << '\t' << win.rows[i];
        for (std::size_t c = 0; c < report.kept_columns.size(); ++c)
          os << '\t' << format_metric(win.truth[i][c]) << '\t' << format_metric(win.predicted[i][c]) << '\t'
             << format_metric(win.baseline[i][c]);
        for (double v : report.dropped_constant_value) {
          const std::string s = format_metric(v);
          os << '\t' << s << '\t' << s << '\t' << s;
        }
        os << '\n';
      }
    }
    return os.str();
  }
};

/// Inpaints n points inside every validation window from its two endpoints.
/// Constant columns were dropped at ingestion and are reported with their
/// constant value as both truth and prediction.
inline InpaintResult inpaint(const EncoderPair& enc, const CsvSeries& series, std::size_t n, PlanMode mode) {
  if (n == 0) throw Error("inpaint: n must be at least 1");
  const auto& ds = series.dataset;
  const auto val = ds.split_view(Split::validation);
  std::vector<Vector> bank = ds.observations(Split::validation);
  if (val.empty()) throw Error("inpaint: no validation windows");
  const WaypointPredictor predictor(enc, bank, ds.obs_dim, mode);
  const auto& rep = series.report;
  auto denorm = [&](const Vector& z) {
    Vector out(z.dim());
    for (std::size_t c = 0; c < z.dim(); ++c) out[c] = z[c] * rep.column_std[c] + rep.column_mean[c];
    return out;
  };
  InpaintResult res;
  res.report = rep;
  std::size_t count = 0;
  for (const Trajectory* t : val) {
    const auto& obs = t->observations;
    if (obs.size() < 3) continue;
    InpaintWindow win;
    win.start_row = t->id;
    const auto pred = predictor.predict("contrastive", obs.front(), obs.back(), n);
    const auto base = predictor.predict("obs-interp", obs.front(), obs.back(), n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = true_waypoint_index(i + 1, n, obs.size());
      const Vector& truth = obs[idx];
      res.mse_model += squared_distance(pred[i].span(), truth.span()) / static_cast<double>(ds.obs_dim);
      res.mse_baseline += squared_distance(base[i].span(), truth.span()) / static_cast<double>(ds.obs_dim);
      ++count;
      win.rows.push_back(static_cast<std::size_t>(t->id) + idx);
      win.truth.push_back(denorm(truth));
      win.predicted.push_back(denorm(pred[i]));
      win.baseline.push_back(denorm(base[i]));
    }
    res.windows.push_back(std::move(win));
  }
  if (count == 0) throw Error("inpaint: validation windows are too short");
  res.mse_model /= static_cast<double>(count);
  res.mse_baseline /= static_cast<double>(count);
  return res;
}

// ---------------------------------------------------------------------------
// Run manifest

inline constexpr const char* kToolVersion = "gmc 0.1.0";

/// Key-value record of one CLI invocation. Repeated keys (arg, artifact)
/// keep their order; metrics are sorted by name.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // full argument list after the program name
  std::string config;             // config snapshot, one key=value per line
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string dataset;
  std::vector<std::string> artifacts;
  std::map<std::string, double> metrics;
  std::string tool_version = kToolVersion;

  std::string to_text() const {
    std::ostringstream os;
    os << "tool_version=" << tool_version << '\n';
    os << "command=" << command << '\n';
    os << "seed=" << seed << '\n';
    os << "checkpoint=" << checkpoint << '\n';
    os << "dataset=" << dataset << '\n';
    for (const auto& a : args) os << "arg=" << a << '\n';
    std::istringstream cfg(config);
    std::string line;
    while (std::getline(cfg, line))
      if (!line.empty()) os << "config." << line << '\n';
    for (const auto& a : artifacts) os << "artifact=" << a << '\n';
    for (const auto& [k, v] : metrics) os << "metric." << k << '=' << format_metric(v) << '\n';
    return os.str();
  }

  static RunManifest parse(std::istream& in) {
    RunManifest m;
    std::string line;
    std::size_t line_no = 0;
    std::ostringstream cfg;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("manifest line " + std::to_string(line_no) + " has no '='");
      const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
      if (key == "tool_version") m.tool_version = val;
      else if (key == "command") m.command = val;
      else if (key == "seed") m.seed = std::stoull(val);
      else if (key == "checkpoint") m.checkpoint = val;
      else if (key == "dataset") m.dataset = val;
      else if (key == "arg") m.args.push_back(val);
      else if (key == "artifact") m.artifacts.push_back(val);
      else if (key.rfind("config.", 0) == 0) cfg << key.substr(7) << '=' << val << '\n';
      else if (key.rfind("metric.", 0) == 0) m.metrics[key.substr(7)] = std::stod(val);
      else throw Error("manifest line " + std::to_string(line_no) + ": unknown key " + key);
    }
    m.config = cfg.str();
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest: " + path);
    out << to_text();
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest: " + path);
    return parse(in);
  }
};

/// Largest absolute difference over metrics present in both manifests, and
/// the names present in only one.
struct MetricComparison {
  double max_abs_diff = 0.0;
  std::vector<std::string> missing;
};

inline MetricComparison compare_metrics(const std::map<std::string, double>& expected,
                                        const std::map<std::string, double>& actual) {
  MetricComparison out;
  for (const auto& [k, v] : expected) {
    auto it = actual.find(k);
    if (it == actual.end()) {
      out.missing.push_back(k);
      continue;
    }
    const double d = std::abs(v - it->second);
    out.max_abs_diff = std::max(out.max_abs_diff, std::isnan(d) ? std::numeric_limits<double>::infinity() : d);
  }
  for (const auto& [k, v] : actual)
    if (!expected.count(k)) out.missing.push_back(k);
  return out;
}

}  // namespace gmc
