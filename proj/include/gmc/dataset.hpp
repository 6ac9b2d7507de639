#pragma once

// Trajectory datasets, positive-pair sampling from the discounted occupancy,
// and the line-delimited dataset file format.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmc/rng.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

enum class Split { train, validation };

struct Trajectory {
  std::int64_t id = 0;
  std::vector<Vector> observations;
  Split split = Split::train;

  std::size_t length() const { return observations.size(); }
};

struct TrajectoryDataset {
  std::vector<Trajectory> trajectories;
  std::size_t obs_dim = 0;
  std::string meta;  // spiral | maze | csv | chain

  void validate() const {
    if (trajectories.empty()) throw Error("dataset has no trajectories");
    for (const auto& t : trajectories) {
      if (t.length() < 2)
        throw Error("trajectory " + std::to_string(t.id) + " has fewer than 2 observations");
      for (const auto& o : t.observations)
        if (o.dim() != obs_dim)
          throw DimensionError("trajectory " + std::to_string(t.id) + " has an observation of dim " +
                               std::to_string(o.dim()) + ", dataset dim is " +
                               std::to_string(obs_dim));
    }
  }

  std::vector<const Trajectory*> split_view(Split s) const {
    std::vector<const Trajectory*> out;
    for (const auto& t : trajectories)
      if (t.split == s) out.push_back(&t);
    return out;
  }

  /// All observations of one split, in trajectory order.
  std::vector<Vector> observations(Split s) const {
    std::vector<Vector> out;
    for (const auto& t : trajectories)
      if (t.split == s) out.insert(out.end(), t.observations.begin(), t.observations.end());
    return out;
  }
};

/// Marks round(fraction·N) trajectories as validation, chosen by a seeded shuffle.
inline void assign_split(TrajectoryDataset& ds, double validation_fraction, std::uint64_t seed) {
  const std::size_t n = ds.trajectories.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0x5eedf00dULL);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n >= 2 && validation_fraction > 0.0 && n_val == 0) n_val = 1;
  if (n_val >= n && n >= 2) n_val = n - 1;
  for (std::size_t i = 0; i < n; ++i)
    ds.trajectories[order[i]].split = i < n_val ? Split::validation : Split::train;
}

// ---------------------------------------------------------------------------
// Positive pairs

struct PositivePair {
  const Vector* x;
  const Vector* x_pos;
  std::size_t trajectory;
  std::size_t t;
  std::size_t offset;
};

/// Samples (x_t, x_{t+Δ}) with the trajectory chosen proportionally to its
/// length, t uniform, and Δ ~ Geometric(1-γ) on {0, 1, ...}. Offsets that run
/// past the end of the trajectory are redrawn.
class PairSampler {
 public:
  PairSampler(const TrajectoryDataset& ds, double gamma, Split split = Split::train)
      : ds_(&ds), gamma_(gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw Error("pair sampler: gamma must lie in (0, 1)");
    for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
      const auto& t = ds.trajectories[i];
      if (t.split != split || t.length() == 0) continue;
      total_ += t.length();
      index_.push_back(i);
      cumulative_.push_back(total_);
    }
    if (index_.empty()) throw Error("pair sampler: no trajectories in the requested split");
  }

  PositivePair sample(Rng& rng) const {
    const std::uint64_t u = rng.uniform_index(total_);
    std::size_t lo = 0, hi = cumulative_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (u < cumulative_[mid]) hi = mid; else lo = mid + 1;
    }
    const std::size_t traj = index_[lo];
    const auto& obs = ds_->trajectories[traj].observations;
    const std::size_t t = static_cast<std::size_t>(rng.uniform_index(obs.size()));
    const std::size_t remaining = obs.size() - 1 - t;
    std::uint64_t delta;
    do {
      delta = rng.geometric(1.0 - gamma_);
    } while (delta > remaining);
    const auto d = static_cast<std::size_t>(delta);
    return {&obs[t], &obs[t + d], traj, t, d};
  }

 private:
  const TrajectoryDataset* ds_;
  double gamma_;
  std::vector<std::size_t> index_;
  std::vector<std::uint64_t> cumulative_;
  std::uint64_t total_ = 0;
};

// ---------------------------------------------------------------------------
// File format: one JSON record per line. Line 1 is the header
// {"format":"gmc-dataset","version":1,"obs_dim":d,"meta":..,"num_trajectories":N,"num_observations":M};
// each further line is {"id":..,"split":"train"|"validation","length":T,"obs":[T*d numbers]}.
// Numbers are written with 17 significant digits, so loading is bit-exact.

class DatasetFormatError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kDatasetVersion = 1;

namespace detail {
inline void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}
}  // namespace detail

inline void write_dataset(std::ostream& out, const TrajectoryDataset& ds) {
  for (const auto& t : ds.trajectories)
    if (t.observations.empty())
      throw DatasetFormatError("refusing to save empty trajectory " + std::to_string(t.id));
  ds.validate();
  std::size_t total = 0;
  for (const auto& t : ds.trajectories) total += t.length();
  nlohmann::json header = {{"format", "gmc-dataset"},
                           {"version", kDatasetVersion},
                           {"obs_dim", ds.obs_dim},
                           {"meta", ds.meta},
                           {"num_trajectories", ds.trajectories.size()},
                           {"num_observations", total}};
  out << header.dump() << '\n';
  std::string line;
  for (const auto& t : ds.trajectories) {
    line.clear();
    line += "{\"id\":" + std::to_string(t.id) + ",\"split\":\"" +
            (t.split == Split::train ? "train" : "validation") +
            "\",\"length\":" + std::to_string(t.length()) + ",\"obs\":[";
    bool first = true;
    for (const auto& o : t.observations)
      for (double v : o) {
        if (!first) line += ',';
        first = false;
        detail::append_double(line, v);
      }
    line += "]}\n";
    out << line;
  }
}

inline void save_dataset(const TrajectoryDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetFormatError("cannot open dataset for writing: " + path);
  write_dataset(out, ds);
  if (!out) throw DatasetFormatError("failed writing dataset: " + path);
}

inline TrajectoryDataset read_dataset(std::istream& in) {
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& start, std::string& line) -> bool {
    if (pos >= content.size()) return false;
    start = pos;
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos)
      throw DatasetFormatError("dataset truncated: unterminated record at byte offset " +
                               std::to_string(start));
    line = content.substr(pos, nl - pos);
    pos = nl + 1;
    return true;
  };
  std::size_t start = 0;
  std::string line;
  if (!next_line(start, line)) throw DatasetFormatError("dataset is empty");
  TrajectoryDataset ds;
  std::size_t expected = 0;
  try {
    const auto h = nlohmann::json::parse(line);
    if (h.value("format", "") != "gmc-dataset")
      throw DatasetFormatError("not a gmc dataset (byte offset 0)");
    if (h.at("version").get<int>() != kDatasetVersion)
      throw DatasetFormatError("unsupported dataset version " +
                               std::to_string(h.at("version").get<int>()));
    ds.obs_dim = h.at("obs_dim").get<std::size_t>();
    ds.meta = h.at("meta").get<std::string>();
    expected = h.at("num_trajectories").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DatasetFormatError(std::string("malformed dataset header at byte offset 0: ") + e.what());
  }
  if (ds.obs_dim == 0) throw DatasetFormatError("dataset header has obs_dim 0");
  while (next_line(start, line)) {
    if (line.empty()) continue;
    Trajectory t;
    try {
      const auto r = nlohmann::json::parse(line);
      t.id = r.at("id").get<std::int64_t>();
      const auto split = r.at("split").get<std::string>();
      if (split != "train" && split != "validation")
        throw DatasetFormatError("bad split '" + split + "' at byte offset " + std::to_string(start));
      t.split = split == "train" ? Split::train : Split::validation;
      const auto len = r.at("length").get<std::size_t>();
      const auto& obs = r.at("obs");
      if (obs.size() != len * ds.obs_dim)
        throw DatasetFormatError("record at byte offset " + std::to_string(start) + " has " +
                                 std::to_string(obs.size()) + " values, expected length*obs_dim = " +
                                 std::to_string(len * ds.obs_dim));
      for (std::size_t i = 0; i < len; ++i) {
        Vector o(ds.obs_dim);
        for (std::size_t j = 0; j < ds.obs_dim; ++j) o[j] = obs[i * ds.obs_dim + j].get<double>();
        t.observations.push_back(std::move(o));
      }
    } catch (const nlohmann::json::exception& e) {
      throw DatasetFormatError("malformed record at byte offset " + std::to_string(start) + ": " +
                               e.what());
    }
    ds.trajectories.push_back(std::move(t));
  }
  if (ds.trajectories.size() != expected)
    throw DatasetFormatError("dataset truncated at byte offset " + std::to_string(content.size()) +
                             ": header promises " + std::to_string(expected) +
                             " trajectories, found " + std::to_string(ds.trajectories.size()));
  ds.validate();
  return ds;
}

inline TrajectoryDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetFormatError("cannot open dataset: " + path);
  return read_dataset(in);
}

}  // namespace gmc
