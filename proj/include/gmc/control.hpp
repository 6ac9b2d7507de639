#pragma once

// Waypoint-tracking proportional control in the maze and the success-rate
// harness that compares planned, direct and interpolation waypoints.

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/encoder.hpp"
#include "gmc/envs.hpp"
#include "gmc/inference.hpp"
#include "gmc/nearest.hpp"
#include "gmc/pca.hpp"
#include "gmc/rng.hpp"

namespace gmc {

struct ControllerConfig {
  double gain = 0.5;
  double max_step = 0.1;
  double waypoint_tolerance = 0.15;
  std::size_t max_steps = 600;
  double success_radius = 0.1;

  void validate() const {
    if (!(gain > 0 && max_step > 0 && waypoint_tolerance > 0 && success_radius > 0 && max_steps > 0))
      throw Error("controller config values must all be positive");
  }
};

enum class Tier { near, medium, far };

inline std::string to_string(Tier t) {
  switch (t) {
    case Tier::near: return "near";
    case Tier::medium: return "medium";
    case Tier::far: return "far";
  }
  return "?";
}

struct RolloutRecord {
  Vector start;
  Vector goal;
  std::vector<Vector> visited;
  std::vector<Vector> waypoints_used;
  bool success = false;
  std::size_t steps_taken = 0;
  Tier difficulty_tier = Tier::near;
};

/// Hardest pairs: one endpoint inside the trap, the other in a region hidden
/// behind it, with the straight segment blocked. Otherwise medium if the
/// segment crosses a wall, near if not.
inline Tier classify_tier(const MazeSpec& env, const Vector& start, const Vector& goal) {
  const Point s = to_point(start), g = to_point(goal);
  const std::size_t crossings = env.crossings(s, g);
  if (crossings == 0) return Tier::near;
  auto in_goal = [&](Point p) {
    return std::any_of(env.goal_regions.begin(), env.goal_regions.end(), [&](const Rect& r) { return r.contains(p); });
  };
  if ((env.start_region.contains(s) && in_goal(g)) || (env.start_region.contains(g) && in_goal(s)))
    return Tier::far;
  return Tier::medium;
}

/// Point-mass rollout. The target is the first waypoint not yet reached
/// (within waypoint_tolerance), then the goal; each action is
/// gain·(target - position) clipped to max_step, resolved by sliding.
inline RolloutRecord rollout(const MazeSpec& env, const ControllerConfig& ctrl, const std::vector<Vector>& waypoints,
                             const Vector& start, const Vector& goal) {
  ctrl.validate();
  RolloutRecord rec;
  rec.start = start;
  rec.goal = goal;
  rec.waypoints_used = waypoints;
  rec.difficulty_tier = classify_tier(env, start, goal);
  Point pos = to_point(start);
  rec.visited.push_back(start);
  std::size_t next_wp = 0;
  auto dist = [](Point a, const Vector& b) { return std::hypot(b[0] - a.x, b[1] - a.y); };
  for (std::size_t step = 0; step < ctrl.max_steps; ++step) {
    if (dist(pos, goal) <= ctrl.success_radius) {
      rec.success = true;
      break;
    }
    while (next_wp < waypoints.size() && dist(pos, waypoints[next_wp]) <= ctrl.waypoint_tolerance) ++next_wp;
    const Vector& target = next_wp < waypoints.size() ? waypoints[next_wp] : goal;
    double dx = ctrl.gain * (target[0] - pos.x), dy = ctrl.gain * (target[1] - pos.y);
    const double mag = std::hypot(dx, dy);
    if (mag > ctrl.max_step) {
      dx *= ctrl.max_step / mag;
      dy *= ctrl.max_step / mag;
    }
    pos = slide_move(env, pos, dx, dy);
    rec.visited.push_back(to_vector(pos));
    rec.steps_taken = step + 1;
  }
  if (!rec.success && dist(pos, goal) <= ctrl.success_radius) rec.success = true;
  return rec;
}

// ---------------------------------------------------------------------------
// Waypoint planners

/// Validation observations together with their ψ encodings.
struct EncodedBank {
  std::vector<Vector> observations;
  std::vector<Vector> psis;
};

inline EncodedBank encode_bank(const EncoderPair& enc, std::vector<Vector> observations) {
  if (observations.empty()) throw Error("encode_bank: empty bank");
  EncodedBank bank;
  bank.psis = psi_forward_batch(enc, observations);
  bank.observations = std::move(observations);
  return bank;
}

/// Plans n waypoint representations between start and goal with the chain
/// posterior and returns the nearest bank observation for each mean.
inline std::vector<Vector> plan_observation_waypoints(const EncoderPair& enc, const Vector& start_obs,
                                                      const Vector& goal_obs, std::size_t n,
                                                      const EncodedBank& bank) {
  if (bank.observations.empty()) throw Error("plan_observation_waypoints: empty bank");
  if (n == 0) return {};
  const Vector psi0 = psi_forward(enc, start_obs);
  const Vector psi_t = psi_forward(enc, goal_obs);
  const PlanResult plan = plan_chain(psi0, psi_t, n, enc.a_matrix, enc.c);
  std::vector<Vector> out;
  for (const auto& w : plan.waypoints) out.push_back(bank.observations[nearest_index(w.mean(), bank.psis)]);
  return out;
}

/// Straight-line interpolation in observation space, snapped to the bank.
inline std::vector<Vector> interpolate_observation_waypoints(const Vector& start, const Vector& goal,
                                                             std::size_t n, std::span<const Vector> bank) {
  std::vector<Vector> out;
  for (std::size_t i = 1; i <= n; ++i) {
    const double lam = static_cast<double>(i) / static_cast<double>(n + 1);
    out.push_back(bank[nearest_index((1.0 - lam) * start + lam * goal, bank)]);
  }
  return out;
}

/// Interpolation between principal-component projections, retrieved by
/// nearest neighbour among the projected bank.
struct PcaPlanner {
  PcaModel model;
  std::vector<Vector> projected;
  std::vector<Vector> observations;

  PcaPlanner(std::vector<Vector> bank, std::size_t num_components)
      : model(pca_fit(bank, std::min(num_components, bank.front().dim()))), observations(std::move(bank)) {
    projected.reserve(observations.size());
    for (const auto& o : observations) projected.push_back(model.project(o));
  }

  std::vector<Vector> waypoints(const Vector& start, const Vector& goal, std::size_t n) const {
    const Vector zs = model.project(start), zg = model.project(goal);
    std::vector<Vector> out;
    for (std::size_t i = 1; i <= n; ++i) {
      const double lam = static_cast<double>(i) / static_cast<double>(n + 1);
      out.push_back(observations[nearest_index((1.0 - lam) * zs + lam * zg, projected)]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Success evaluation

inline const std::vector<std::string>& control_methods() {
  static const std::vector<std::string> m{"planned", "direct", "pca-interp", "obs-interp"};
  return m;
}

struct SuccessCell {
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mean_steps = 0.0;

  std::size_t episodes() const { return successes + failures; }
  double rate() const { return episodes() ? static_cast<double>(successes) / static_cast<double>(episodes()) : 0.0; }
};

struct EpisodeResult {
  std::size_t episode = 0;
  std::string method;
  RolloutRecord record;
};

struct SuccessTable {
  std::map<std::pair<Tier, std::string>, SuccessCell> cells;
  std::vector<EpisodeResult> episodes;

  const SuccessCell& at(Tier t, const std::string& method) const { return cells.at({t, method}); }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(6);
    os << "tier\tmethod\tepisodes\tsuccesses\tfailures\tsuccess_rate\tmean_steps\n";
    for (const auto& [key, cell] : cells)
      os << to_string(key.first) << '\t' << key.second << '\t' << cell.episodes() << '\t' << cell.successes << '\t'
         << cell.failures << '\t' << cell.rate() << '\t' << cell.mean_steps << '\n';
    return os.str();
  }
};

struct SuccessEvalConfig {
  std::size_t n_waypoints = 8;
  std::size_t episodes_per_tier = 50;
  std::uint64_t seed = 0;
  std::size_t pca_components = 8;
  ControllerConfig controller;
  std::size_t max_pair_attempts = 200000;
};

/// Samples a free start/goal pair of the requested tier by rejection.
inline std::pair<Vector, Vector> sample_tier_pair(const MazeSpec& env, Tier tier, Rng& rng, std::size_t max_attempts) {
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    const Point s{rng.uniform(env.bounds.x0, env.bounds.x1), rng.uniform(env.bounds.y0, env.bounds.y1)};
    const Point g{rng.uniform(env.bounds.x0, env.bounds.x1), rng.uniform(env.bounds.y0, env.bounds.y1)};
    if (!env.is_free(s) || !env.is_free(g)) continue;
    if (std::hypot(s.x - g.x, s.y - g.y) < 0.3) continue;
    if (classify_tier(env, to_vector(s), to_vector(g)) == tier) return {to_vector(s), to_vector(g)};
  }
  throw Error("could not sample a start/goal pair for tier " + to_string(tier));
}

/// Runs every method on the same stratified start/goal pairs.
inline SuccessTable evaluate_success(const EncoderPair& enc, const MazeSpec& env, const TrajectoryDataset& dataset,
                                     const SuccessEvalConfig& cfg) {
  std::vector<Vector> bank_obs = dataset.observations(Split::validation);
  if (bank_obs.empty()) throw Error("evaluate_success: dataset has no validation observations");
  const EncodedBank bank = encode_bank(enc, bank_obs);
  const PcaPlanner pca(bank_obs, cfg.pca_components);
  Rng rng(cfg.seed);
  SuccessTable table;
  std::size_t episode = 0;
  for (Tier tier : {Tier::near, Tier::medium, Tier::far}) {
    for (std::size_t e = 0; e < cfg.episodes_per_tier; ++e, ++episode) {
      const auto [start, goal] = sample_tier_pair(env, tier, rng, cfg.max_pair_attempts);
      for (const auto& method : control_methods()) {
        std::vector<Vector> wps;
        if (method == "planned") wps = plan_observation_waypoints(enc, start, goal, cfg.n_waypoints, bank);
        else if (method == "pca-interp") wps = pca.waypoints(start, goal, cfg.n_waypoints);
        else if (method == "obs-interp") wps = interpolate_observation_waypoints(start, goal, cfg.n_waypoints, bank_obs);
        RolloutRecord rec = rollout(env, cfg.controller, wps, start, goal);
        rec.difficulty_tier = tier;
        auto& cell = table.cells[{tier, method}];
        const double prev_n = static_cast<double>(cell.episodes());
        cell.mean_steps = (cell.mean_steps * prev_n + static_cast<double>(rec.steps_taken)) / (prev_n + 1.0);
        (rec.success ? cell.successes : cell.failures) += 1;
        table.episodes.push_back({episode, method, std::move(rec)});
      }
    }
  }
  return table;
}

}  // namespace gmc
