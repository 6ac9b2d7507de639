// gmc: data generation, training, verification and evaluation front end.
//
// Every command writes its outputs and a run.manifest under --out-dir.
// Exit codes: 0 ran (verify FAIL rows included), 1 runtime failure, 2 usage.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "gmc/control.hpp"
#include "gmc/dataset.hpp"
#include "gmc/encoder.hpp"
#include "gmc/envs.hpp"
#include "gmc/eval.hpp"
#include "gmc/inference.hpp"
#include "gmc/objective.hpp"

namespace fs = std::filesystem;
using namespace gmc;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out_dir = ".";
  bool quiet = false;
};

/// Shared state of one invocation: output directory, manifest, logging.
class Run {
 public:
  Run(const Globals& g, std::string command, std::vector<std::string> args) : g_(g), out_(g.out_dir) {
    manifest_.command = std::move(command);
    manifest_.args = std::move(args);
    manifest_.seed = g.seed;
    fs::create_directories(out_);
  }

  std::string artifact(const std::string& name) {
    const std::string p = (out_ / name).string();
    manifest_.artifacts.push_back(p);
    return p;
  }

  std::ostream& info() {
    static std::ostream null(nullptr);
    return g_.quiet ? null : std::cout;
  }

  RunManifest& manifest() { return manifest_; }

  void finish() { manifest_.save((out_ / "run.manifest").string()); }

 private:
  const Globals& g_;
  fs::path out_;
  RunManifest manifest_;
};

std::string snapshot(const CLI::App& sub) {
  std::string out;
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    const auto res = opt->results();
    std::string name = opt->get_name();
    name.erase(0, name.find_first_not_of('-'));
    out += name + "=";
    for (std::size_t i = 0; i < res.size(); ++i) out += (i ? "," : "") + res[i];
    if (res.empty()) out += opt->get_default_str();
    out += "\n";
  }
  return out;
}

std::string key_value_config(const TrainConfig& cfg) {
  std::string s = format_config(cfg), out;
  for (std::size_t pos = 0; pos < s.size();) {
    const auto nl = s.find('\n', pos);
    std::string line = s.substr(pos, nl - pos);
    if (const auto eq = line.find(" = "); eq != std::string::npos) line.replace(eq, 3, "=");
    out += line + "\n";
    pos = nl == std::string::npos ? s.size() : nl + 1;
  }
  return out;
}

std::string join(const Vector& v, const char* sep = "\t") {
  std::string out;
  for (std::size_t i = 0; i < v.dim(); ++i) out += (i ? sep : "") + format_metric(v[i]);
  return out;
}

std::string numbered_header(const std::string& prefix, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) out += (i ? "\t" : "") + prefix + std::to_string(i);
  return out;
}

double observation_sum(const TrajectoryDataset& ds) {
  double s = 0.0;
  for (const auto& t : ds.trajectories)
    for (const auto& o : t.observations)
      for (double v : o) s += v;
  return s;
}

std::size_t checked_index(long long idx, std::size_t size, const char* flag) {
  if (idx < 0 || static_cast<std::size_t>(idx) >= size)
    throw UsageError(std::string(flag) + " " + std::to_string(idx) + " is outside the validation bank [0, " +
                     std::to_string(size) + ")");
  return static_cast<std::size_t>(idx);
}

// ---------------------------------------------------------------------------
// Command options

struct GenOpts {
  std::string kind, out = "dataset.jsonl";
  std::size_t num_traj = 0, length = 60, min_length = 50, max_length = 300;
  double noise = -1.0, val_frac = 0.2;
};

struct TrainOpts {
  std::string dataset, csv, resume, out = "model.ckpt";
  std::size_t window = 32;
  long long steps = -1;
  std::size_t log_every = 100;
};

struct VerifyOpts {
  std::string checkpoint, dataset;
  std::size_t states = 5, fit_steps = 20000;
};

struct PlanOpts {
  std::string checkpoint, dataset, mode = "special";
  long long start_idx = -1, goal_idx = -1;
  std::size_t n = 5;
};

struct PredictOpts {
  std::string checkpoint, dataset, direction = "future";
  long long idx = -1;
};

struct EvalOpts {
  std::string checkpoint, dataset, mode = "special";
  std::size_t n = 5, pca_components = 8;
};

struct InpaintOpts {
  std::string checkpoint, csv, mode = "special";
  std::size_t window = 32, n = 3;
  double val_frac = 0.2;
};

struct RolloutOpts {
  std::string checkpoint, dataset;
  std::size_t n_waypoints = 8, episodes = 50;
};

struct ReplayOpts {
  std::string manifest;
  double tolerance = 1e-6;
};

// ---------------------------------------------------------------------------
// Commands

void cmd_gen(Run& run, const Globals& g, const GenOpts& o) {
  TrajectoryDataset ds;
  if (o.kind == "spiral") {
    SpiralConfig cfg;
    if (o.num_traj) cfg.num_traj = o.num_traj;
    cfg.length = o.length;
    if (o.noise >= 0) cfg.noise_std = o.noise;
    cfg.validation_fraction = o.val_frac;
    ds = gen_spiral(cfg, g.seed);
  } else {
    MazeGenConfig cfg;
    if (o.num_traj) cfg.num_traj = o.num_traj;
    cfg.min_length = o.min_length;
    cfg.max_length = o.max_length;
    if (o.noise >= 0) cfg.noise_std = o.noise;
    cfg.validation_fraction = o.val_frac;
    ds = gen_maze(default_maze(), cfg, g.seed);
  }
  const std::string path = run.artifact(o.out);
  save_dataset(ds, path);
  run.manifest().dataset = path;
  std::size_t num_obs = 0;
  for (const auto& t : ds.trajectories) num_obs += t.length();
  auto& m = run.manifest().metrics;
  m["dataset.num_trajectories"] = static_cast<double>(ds.trajectories.size());
  m["dataset.num_observations"] = static_cast<double>(num_obs);
  m["dataset.num_validation"] = static_cast<double>(ds.split_view(Split::validation).size());
  m["dataset.observation_sum"] = observation_sum(ds);
  run.info() << "wrote " << ds.trajectories.size() << " " << o.kind << " trajectories to " << path << "\n";
}

void cmd_train(Run& run, const Globals& g, const TrainOpts& o, bool seed_given) {
  TrainConfig cfg;
  if (!g.config.empty()) cfg = load_train_config(g.config);
  if (seed_given || g.config.empty()) cfg.seed = g.seed;
  if (o.steps >= 0) cfg.steps = static_cast<std::size_t>(o.steps);
  cfg.validate();
  if (o.dataset.empty() == o.csv.empty()) throw UsageError("train: give exactly one of --dataset or --csv");
  TrajectoryDataset ds;
  if (!o.dataset.empty()) {
    ds = load_dataset(o.dataset);
    run.manifest().dataset = o.dataset;
  } else {
    ds = load_csv_series(o.csv, o.window).dataset;
    run.manifest().dataset = o.csv;
  }
  EncoderPair enc = o.resume.empty() ? init_encoder_for(ds, cfg) : load_checkpoint(o.resume);
  if (!o.resume.empty() && std::abs(enc.c - cfg.c) > 0.0) {
    run.info() << "note: resuming with the checkpoint's c = " << enc.c << "\n";
  }
  const std::uint64_t first_step = enc.step;
  const std::string curve_path = run.artifact("train_curve.tsv");
  std::ofstream curve(curve_path);
  if (!curve) throw Error("cannot write " + curve_path);
  curve << "step\tloss\tinfonce\tconstraint\tlambda\n";
  TrainRecord last;
  last.lambda = enc.dual_lambda;
  const std::uint64_t final_step = first_step + cfg.steps;
  enc = train(ds, cfg, std::move(enc), [&](const TrainRecord& r) {
    last = r;
    if (r.step % std::max<std::size_t>(1, o.log_every) == 0 || r.step == final_step) {
      curve << r.step << '\t' << format_metric(r.loss) << '\t' << format_metric(r.infonce) << '\t'
            << format_metric(r.constraint) << '\t' << format_metric(r.lambda) << '\n';
      if (r.step % (10 * std::max<std::size_t>(1, o.log_every)) == 0)
        run.info() << "step " << r.step << " loss " << r.loss << " constraint " << r.constraint << " lambda "
                   << r.lambda << "\n";
    }
  });
  curve.close();
  const std::string ckpt = run.artifact(o.out);
  save_checkpoint(ckpt, enc);
  run.manifest().checkpoint = ckpt;
  run.manifest().config = key_value_config(cfg);
  auto& m = run.manifest().metrics;
  m["train.first_step"] = static_cast<double>(first_step);
  m["train.final_step"] = static_cast<double>(enc.step);
  m["train.final_lambda"] = enc.dual_lambda;
  if (cfg.steps > 0) {
    m["train.final_loss"] = last.loss;
    m["train.final_infonce"] = last.infonce;
    m["train.final_constraint"] = last.constraint;
  }
  run.info() << "checkpoint " << ckpt << " at step " << enc.step << "\n";
}

void report_checks(Run& run, const VerifyReport& rep, const std::string& prefix) {
  for (const auto& c : rep.checks) run.manifest().metrics[prefix + c.name] = c.measured;
}

void cmd_verify(Run& run, const Globals& g, const VerifyOpts& o) {
  if (!o.checkpoint.empty() && o.dataset.empty()) throw UsageError("verify: --checkpoint needs --dataset");
  OracleSuiteConfig oc;
  oc.num_states = o.states;
  oc.seed = g.seed;
  oc.fit.steps = o.fit_steps;
  const VerifyReport oracle = run_oracle_suite(oc);
  std::string text = "# oracle suite\n" + oracle.to_text();
  report_checks(run, oracle, "oracle.");
  if (!o.checkpoint.empty()) {
    const EncoderPair enc = load_checkpoint(o.checkpoint);
    const TrajectoryDataset ds = load_dataset(o.dataset);
    const VerifyReport ck = run_checkpoint_checks(enc, ds);
    text += "# checkpoint\n" + ck.to_text();
    report_checks(run, ck, "checkpoint.");
    run.manifest().checkpoint = o.checkpoint;
    run.manifest().dataset = o.dataset;
  }
  std::ofstream(run.artifact("verify_report.tsv")) << text;
  run.info() << text;
}

struct Loaded {
  EncoderPair enc;
  TrajectoryDataset ds;
  std::vector<Vector> bank;
  std::vector<Vector> bank_psi;
};

Loaded load_model_and_bank(Run& run, const std::string& checkpoint, const std::string& dataset) {
  Loaded l;
  l.enc = load_checkpoint(checkpoint);
  l.ds = load_dataset(dataset);
  l.bank = l.ds.observations(Split::validation);
  if (l.bank.empty()) throw Error("dataset has no validation observations");
  l.bank_psi = psi_forward_batch(l.enc, l.bank);
  run.manifest().checkpoint = checkpoint;
  run.manifest().dataset = dataset;
  return l;
}

void cmd_plan(Run& run, const PlanOpts& o) {
  const PlanMode mode = parse_plan_mode(o.mode);
  Loaded l = load_model_and_bank(run, o.checkpoint, o.dataset);
  const std::size_t s = checked_index(o.start_idx, l.bank.size(), "--start-idx");
  const std::size_t t = checked_index(o.goal_idx, l.bank.size(), "--goal-idx");
  if (o.n == 0) throw UsageError("--n must be at least 1");
  const PlanResult plan = mode == PlanMode::special
                              ? interpolate_special(l.bank_psi[s], l.bank_psi[t], o.n, l.enc.a_matrix)
                              : plan_chain(l.bank_psi[s], l.bank_psi[t], o.n, l.enc.a_matrix, l.enc.c);
  const std::size_t k = l.enc.repr_dim(), d = l.ds.obs_dim;
  std::ofstream out(run.artifact("plan.tsv"));
  out << "waypoint\t" << numbered_header("mean_", k) << '\t' << numbered_header("cov_diag_", k)
      << "\tbank_index\t" << numbered_header("obs_", d) << '\n';
  auto& m = run.manifest().metrics;
  for (std::size_t i = 0; i < plan.waypoints.size(); ++i) {
    const GaussianBelief w = plan.waypoints[i].to_moment();
    Vector diag(k);
    for (std::size_t a = 0; a < k; ++a) diag[a] = w.cov()(a, a);
    const std::size_t nn = nearest_index(w.mean(), l.bank_psi);
    out << i + 1 << '\t' << join(w.mean()) << '\t'
        << join(diag) << '\t' << nn << '\t' << join(l.bank[nn]) << '\n';
    m["plan.w" + std::to_string(i + 1) + ".bank_index"] = static_cast<double>(nn);
    m["plan.w" + std::to_string(i + 1) + ".mean_norm"] = norm(w.mean());
  }
  run.info() << "planned " << o.n << " waypoints (" << o.mode << ") from bank " << s << " to " << t << "\n";
}

void cmd_predict(Run& run, const PredictOpts& o) {
  if (o.direction != "future" && o.direction != "past") throw UsageError("--direction must be future or past");
  Loaded l = load_model_and_bank(run, o.checkpoint, o.dataset);
  const std::size_t i = checked_index(o.idx, l.bank.size(), "--idx");
  const GaussianBelief b = o.direction == "future" ? predict_future(l.bank_psi[i], l.enc.a_matrix, l.enc.c)
                                                   : predict_past(l.bank_psi[i], l.enc.a_matrix, l.enc.c);
  const std::size_t k = l.enc.repr_dim(), d = l.ds.obs_dim;
  std::ofstream out(run.artifact("belief.tsv"));
  out << "# mean\t" << join(b.mean()) << '\n';
  for (std::size_t r = 0; r < k; ++r) {
    Vector row(k);
    for (std::size_t c = 0; c < k; ++c) row[c] = b.cov()(r, c);
    out << "# cov_row_" << r << '\t' << join(row) << '\n';
  }
  out << "bank_index\tlog_density\t" << numbered_header("obs_", d) << '\n';
  const DensityEvaluator density(b);
  std::size_t best = 0;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < l.bank.size(); ++j) {
    const double v = density(l.bank_psi[j]);
    if (v > best_val) best_val = v, best = j;
    out << j << '\t' << format_metric(v) << '\t' << join(l.bank[j]) << '\n';
  }
  auto& m = run.manifest().metrics;
  m["predict.mean_norm"] = norm(b.mean());
  m["predict.cov_trace"] = [&] {
    double t = 0;
    for (std::size_t a = 0; a < k; ++a) t += b.cov()(a, a);
    return t;
  }();
  m["predict.top_bank_index"] = static_cast<double>(best);
  m["predict.top_log_density"] = best_val;
  run.info() << o.direction << " belief for bank " << i << ": top bank point " << best << "\n";
}

void cmd_eval_waypoints(Run& run, const EvalOpts& o) {
  WaypointEvalConfig cfg;
  cfg.n_waypoints = o.n;
  cfg.mode = parse_plan_mode(o.mode);
  cfg.pca_components = o.pca_components;
  const EncoderPair enc = load_checkpoint(o.checkpoint);
  const TrajectoryDataset ds = load_dataset(o.dataset);
  run.manifest().checkpoint = o.checkpoint;
  run.manifest().dataset = o.dataset;
  const WaypointEvalResult r = evaluate_waypoints(enc, ds, cfg);
  std::ofstream(run.artifact("waypoint_mse.tsv")) << r.to_text();
  auto& m = run.manifest().metrics;
  for (const auto& [method, v] : r.mse) m["mse." + method] = v;
  m["num_pairs"] = static_cast<double>(r.num_pairs);
  m["skipped"] = static_cast<double>(r.skipped);
  run.info() << r.to_text();
}

void cmd_inpaint(Run& run, const InpaintOpts& o) {
  const PlanMode mode = parse_plan_mode(o.mode);
  const CsvSeries series = load_csv_series(o.csv, o.window, o.val_frac);
  const EncoderPair enc = load_checkpoint(o.checkpoint);
  run.manifest().checkpoint = o.checkpoint;
  run.manifest().dataset = o.csv;
  const InpaintResult r = inpaint(enc, series, o.n, mode);
  std::ofstream(run.artifact("inpaint.tsv")) << r.to_text();
  auto& m = run.manifest().metrics;
  m["inpaint.mse_model"] = r.mse_model;
  m["inpaint.mse_obs_interp"] = r.mse_baseline;
  m["inpaint.windows"] = static_cast<double>(r.windows.size());
  m["inpaint.dropped_columns"] = static_cast<double>(series.report.dropped());
  auto list = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s.empty() ? std::string("none") : s;
  };
  run.info() << "dropped (missing values): " << list(series.report.dropped_missing) << "\n"
             << "dropped (constant): " << list(series.report.dropped_constant) << "\n"
             << "mse model " << r.mse_model << " obs-interp " << r.mse_baseline << " over " << r.windows.size()
             << " windows\n";
}

void cmd_rollout_eval(Run& run, const Globals& g, const RolloutOpts& o) {
  SuccessEvalConfig cfg;
  cfg.n_waypoints = o.n_waypoints;
  cfg.episodes_per_tier = o.episodes;
  cfg.seed = g.seed;
  const EncoderPair enc = load_checkpoint(o.checkpoint);
  const TrajectoryDataset ds = load_dataset(o.dataset);
  run.manifest().checkpoint = o.checkpoint;
  run.manifest().dataset = o.dataset;
  const SuccessTable table = evaluate_success(enc, default_maze(), ds, cfg);
  std::ofstream(run.artifact("success.tsv")) << table.to_text();
  std::ofstream episodes(run.artifact("episodes.jsonl"));
  for (const auto& e : table.episodes) {
    nlohmann::json j;
    j["episode"] = e.episode;
    j["method"] = e.method;
    j["tier"] = to_string(e.record.difficulty_tier);
    j["start"] = std::vector<double>(e.record.start.begin(), e.record.start.end());
    j["goal"] = std::vector<double>(e.record.goal.begin(), e.record.goal.end());
    j["success"] = e.record.success;
    j["steps"] = e.record.steps_taken;
    auto& wps = j["waypoints"] = nlohmann::json::array();
    for (const auto& w : e.record.waypoints_used) wps.push_back({w[0], w[1]});
    const auto& last = e.record.visited.back();
    j["final"] = {last[0], last[1]};
    episodes << j.dump() << '\n';
  }
  auto& m = run.manifest().metrics;
  for (const auto& [key, cell] : table.cells) {
    const std::string name = to_string(key.first) + "." + key.second;
    m["success." + name] = cell.rate();
    m["mean_steps." + name] = cell.mean_steps;
  }
  run.info() << table.to_text();
}

int run_cli(std::vector<std::string> args);

int cmd_replay(Run& run, const Globals& g, const ReplayOpts& o) {
  const RunManifest original = RunManifest::load(o.manifest);
  if (original.command == "replay") throw UsageError("replay: manifest records a replay");
  std::vector<std::string> args = original.args;
  const std::string rerun_dir = (fs::path(g.out_dir) / "rerun").string();
  bool replaced = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out-dir" && i + 1 < args.size()) {
      args[i + 1] = rerun_dir;
      replaced = true;
    } else if (args[i].rfind("--out-dir=", 0) == 0) {
      args[i] = "--out-dir=" + rerun_dir;
      replaced = true;
    }
  }
  if (!replaced) {
    args.insert(args.begin(), rerun_dir);
    args.insert(args.begin(), "--out-dir");
  }
  const int code = run_cli(args);
  if (code != 0) throw Error("replay: command exited with code " + std::to_string(code));
  const RunManifest again = RunManifest::load((fs::path(rerun_dir) / "run.manifest").string());
  const MetricComparison cmp = compare_metrics(original.metrics, again.metrics);
  auto& m = run.manifest().metrics;
  m["replay.max_abs_diff"] = cmp.max_abs_diff;
  m["replay.missing"] = static_cast<double>(cmp.missing.size());
  const bool ok = cmp.max_abs_diff <= o.tolerance && cmp.missing.empty();
  std::ostringstream rep;
  rep << "command\t" << original.command << "\nmetrics\t" << original.metrics.size() << "\nmax_abs_diff\t"
      << format_metric(cmp.max_abs_diff) << "\ntolerance\t" << format_metric(o.tolerance) << "\nresult\t"
      << (ok ? "PASS" : "FAIL") << '\n';
  for (const auto& k : cmp.missing) rep << "missing\t" << k << '\n';
  std::ofstream(run.artifact("replay.tsv")) << rep.str();
  run.info() << rep.str();
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

int run_cli(std::vector<std::string> args) {
  CLI::App app{"gmc: contrastive representations for inference and planning"};
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  Globals g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--config", g.config, "training config file (key = value)");
  app.add_option("--out-dir", g.out_dir, "directory for outputs and run.manifest");
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  GenOpts gen;
  auto* s_gen = app.add_subcommand("gen", "generate a dataset");
  s_gen->add_option("kind", gen.kind, "spiral or maze")->required()->check(CLI::IsMember({"spiral", "maze"}));
  s_gen->add_option("--num-traj", gen.num_traj, "number of trajectories (default per kind)");
  s_gen->add_option("--length", gen.length, "spiral trajectory length");
  s_gen->add_option("--min-length", gen.min_length, "maze minimum trajectory length");
  s_gen->add_option("--max-length", gen.max_length, "maze maximum trajectory length");
  s_gen->add_option("--noise", gen.noise, "observation noise std (default per kind)");
  s_gen->add_option("--val-frac", gen.val_frac, "validation fraction")->check(CLI::Range(0.0, 1.0));
  s_gen->add_option("--out", gen.out, "dataset file name inside --out-dir");

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train", "train an encoder");
  s_train->add_option("--dataset", tr.dataset, "trajectory dataset (JSONL)");
  s_train->add_option("--csv", tr.csv, "CSV time series, sliced into windows");
  s_train->add_option("--window", tr.window, "CSV window length");
  s_train->add_option("--resume", tr.resume, "continue from this checkpoint");
  s_train->add_option("--steps", tr.steps, "override the configured step count");
  s_train->add_option("--log-every", tr.log_every, "training-curve interval");
  s_train->add_option("--out", tr.out, "checkpoint file name inside --out-dir");

  VerifyOpts ve;
  auto* s_verify = app.add_subcommand("verify", "oracle checks and representation checks");
  s_verify->add_option("--checkpoint", ve.checkpoint, "checkpoint to check (optional)");
  s_verify->add_option("--dataset", ve.dataset, "dataset whose validation split is encoded");
  s_verify->add_option("--states", ve.states, "states in the random oracle chain");
  s_verify->add_option("--fit-steps", ve.fit_steps, "tabular critic steps");

  PlanOpts pl;
  auto* s_plan = app.add_subcommand("plan", "plan waypoints between two validation observations");
  s_plan->add_option("--checkpoint", pl.checkpoint)->required();
  s_plan->add_option("--dataset", pl.dataset)->required();
  s_plan->add_option("--start-idx", pl.start_idx, "index into the validation bank")->required();
  s_plan->add_option("--goal-idx", pl.goal_idx, "index into the validation bank")->required();
  s_plan->add_option("--n", pl.n, "number of waypoints");
  s_plan->add_option("--mode", pl.mode, "special or chain")->check(CLI::IsMember({"special", "chain"}));

  PredictOpts pr;
  auto* s_pred = app.add_subcommand("predict", "future or past belief for a validation observation");
  s_pred->add_option("--checkpoint", pr.checkpoint)->required();
  s_pred->add_option("--dataset", pr.dataset)->required();
  s_pred->add_option("--idx", pr.idx, "index into the validation bank")->required();
  s_pred->add_option("--direction", pr.direction, "future or past");

  EvalOpts ev;
  auto* s_eval = app.add_subcommand("eval-waypoints", "waypoint MSE on validation trajectories");
  s_eval->add_option("--checkpoint", ev.checkpoint)->required();
  s_eval->add_option("--dataset", ev.dataset)->required();
  s_eval->add_option("--n", ev.n, "number of waypoints");
  s_eval->add_option("--mode", ev.mode, "special or chain")->check(CLI::IsMember({"special", "chain"}));
  s_eval->add_option("--pca-components", ev.pca_components);

  InpaintOpts ip;
  auto* s_inp = app.add_subcommand("inpaint", "fill in CSV windows from their endpoints");
  s_inp->add_option("--checkpoint", ip.checkpoint)->required();
  s_inp->add_option("--csv", ip.csv)->required();
  s_inp->add_option("--window", ip.window, "window length (must match training)");
  s_inp->add_option("--n", ip.n, "points to inpaint per window");
  s_inp->add_option("--mode", ip.mode, "special or chain")->check(CLI::IsMember({"special", "chain"}));
  s_inp->add_option("--val-frac", ip.val_frac)->check(CLI::Range(0.0, 1.0));

  RolloutOpts ro;
  auto* s_roll = app.add_subcommand("rollout-eval", "maze success rates by tier and method");
  s_roll->add_option("--checkpoint", ro.checkpoint)->required();
  s_roll->add_option("--dataset", ro.dataset, "maze dataset (validation split is the bank)")->required();
  s_roll->add_option("--n-waypoints", ro.n_waypoints);
  s_roll->add_option("--episodes", ro.episodes, "episodes per tier");

  ReplayOpts rp;
  auto* s_replay = app.add_subcommand("replay", "rerun a manifest and compare its metrics");
  s_replay->add_option("manifest", rp.manifest)->required();
  s_replay->add_option("--tolerance", rp.tolerance);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Run run(g, sub->get_name(), args);
    if (sub->get_name() != "train") run.manifest().config = snapshot(*sub);
    int code = 0;
    if (sub == s_gen) cmd_gen(run, g, gen);
    else if (sub == s_train) cmd_train(run, g, tr, app.count("--seed") > 0);
    else if (sub == s_verify) cmd_verify(run, g, ve);
    else if (sub == s_plan) cmd_plan(run, pl);
    else if (sub == s_pred) cmd_predict(run, pr);
    else if (sub == s_eval) cmd_eval_waypoints(run, ev);
    else if (sub == s_inp) cmd_inpaint(run, ip);
    else if (sub == s_roll) cmd_rollout_eval(run, g, ro);
    else if (sub == s_replay) code = cmd_replay(run, g, rp);
    run.finish();
    return code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args));
}
