#pragma once

// Synthetic environments (outward spirals, a point-mass maze) and CSV
// time-series ingestion.

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gmc/dataset.hpp"
#include "gmc/rng.hpp"
#include "gmc/tensor.hpp"

namespace gmc {

// ---------------------------------------------------------------------------
// Spiral

struct SpiralConfig {
  std::size_t num_traj = 500;
  std::size_t length = 60;
  double noise_std = 0.01;
  double radial_rate = 0.05;    // radius grows by this much per step
  double angular_rate = 0.35;   // radians per step
  double validation_fraction = 0.2;
};

inline TrajectoryDataset gen_spiral(const SpiralConfig& cfg, std::uint64_t seed) {
  if (cfg.num_traj < 1) throw Error("gen_spiral: num_traj must be >= 1");
  if (cfg.length < 2) throw Error("gen_spiral: length must be >= 2");
  Rng rng(seed);
  TrajectoryDataset ds;
  ds.obs_dim = 2;
  ds.meta = "spiral";
  for (std::size_t j = 0; j < cfg.num_traj; ++j) {
    Trajectory t;
    t.id = static_cast<std::int64_t>(j);
    const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t s = 0; s < cfg.length; ++s) {
      const double r = cfg.radial_rate * static_cast<double>(s);
      const double th = theta0 + cfg.angular_rate * static_cast<double>(s);
      Vector p{r * std::cos(th), r * std::sin(th)};
      if (cfg.noise_std > 0.0) {
        p[0] += rng.normal(0.0, cfg.noise_std);
        p[1] += rng.normal(0.0, cfg.noise_std);
      }
      t.observations.push_back(std::move(p));
    }
    ds.trajectories.push_back(std::move(t));
  }
  assign_split(ds, cfg.validation_fraction, seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Maze geometry

struct Point {
  double x = 0.0, y = 0.0;
};

struct Segment {
  Point a, b;
};

struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(Point p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
};

namespace geom {

inline double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_segment(Point p, Point a, Point b) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

/// Closed-segment intersection (touching counts).
inline bool segments_intersect(Point p1, Point p2, Point q1, Point q2) {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

inline double point_segment_distance(Point p, const Segment& s) {
  const double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.a.x + t * dx - p.x, ey = s.a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace geom

/// Axis-aligned wall segments inside a rectangle of unit cells. The boundary
/// of `bounds` is always solid. `start_region` is the interior of the trap and
/// `goal_regions` the areas hidden behind it; together they define the hardest
/// start/goal pairs.
struct MazeSpec {
  std::vector<Segment> walls;
  Rect bounds{0.0, 0.0, 5.0, 5.0};
  Rect start_region;
  std::vector<Rect> goal_regions;
  double clearance = 0.02;  // minimum distance kept from any wall

  std::vector<Segment> all_walls() const {
    std::vector<Segment> w = walls;
    const Point p00{bounds.x0, bounds.y0}, p10{bounds.x1, bounds.y0};
    const Point p11{bounds.x1, bounds.y1}, p01{bounds.x0, bounds.y1};
    w.push_back({p00, p10});
    w.push_back({p10, p11});
    w.push_back({p11, p01});
    w.push_back({p01, p00});
    return w;
  }

  std::size_t cells_x() const { return static_cast<std::size_t>(std::lround(bounds.x1 - bounds.x0)); }
  std::size_t cells_y() const { return static_cast<std::size_t>(std::lround(bounds.y1 - bounds.y0)); }

  bool is_free(Point p) const {
    if (!(p.x > bounds.x0 + clearance && p.x < bounds.x1 - clearance && p.y > bounds.y0 + clearance &&
          p.y < bounds.y1 - clearance))
      return false;
    for (const auto& w : walls)
      if (geom::point_segment_distance(p, w) < clearance) return false;
    return true;
  }

  /// True if moving in a straight line from `a` to `b` touches a wall or
  /// ends within the clearance of one.
  bool move_blocked(Point a, Point b) const {
    if (!is_free(b)) return true;
    for (const auto& w : all_walls())
      if (geom::segments_intersect(a, b, w.a, w.b)) return true;
    return false;
  }

  std::size_t crossings(Point a, Point b) const {
    std::size_t n = 0;
    for (const auto& w : walls)
      if (geom::segments_intersect(a, b, w.a, w.b)) ++n;
    return n;
  }

  void validate() const {
    auto inside = [&](const Rect& r) {
      return r.x0 >= bounds.x0 && r.x1 <= bounds.x1 && r.y0 >= bounds.y0 && r.y1 <= bounds.y1 &&
             r.x0 < r.x1 && r.y0 < r.y1;
    };
    if (!(bounds.x0 < bounds.x1 && bounds.y0 < bounds.y1)) throw Error("maze: empty bounds");
    if (!inside(start_region)) throw Error("maze: start region outside bounds");
    for (const auto& g : goal_regions)
      if (!inside(g)) throw Error("maze: goal region outside bounds");
    const Point sc{(start_region.x0 + start_region.x1) / 2, (start_region.y0 + start_region.y1) / 2};
    if (!is_free(sc)) throw Error("maze: start region centre is inside a wall");
    for (const auto& g : goal_regions)
      if (!is_free({(g.x0 + g.x1) / 2, (g.y0 + g.y1) / 2}))
        throw Error("maze: goal region centre is inside a wall");
  }
};

/// 5×5 unit cells with a U-shaped obstacle opening upwards. The cup interior
/// (1,4)×(1,4) is the trap; the strip (1,4)×(0,1) under its base is hidden.
inline MazeSpec default_maze() {
  MazeSpec m;
  m.bounds = {0.0, 0.0, 5.0, 5.0};
  m.walls = {{{1.0, 1.0}, {1.0, 4.0}}, {{4.0, 1.0}, {4.0, 4.0}}, {{1.0, 1.0}, {4.0, 1.0}}};
  m.start_region = {1.0, 1.0, 4.0, 4.0};
  m.goal_regions = {{1.0, 0.0, 4.0, 1.0}};
  return m;
}

inline MazeSpec empty_maze() {
  MazeSpec m = default_maze();
  m.walls.clear();
  return m;
}

inline Point to_point(const Vector& v) { return {v[0], v[1]}; }
inline Vector to_vector(Point p) { return Vector{p.x, p.y}; }

/// Axis-separated sliding: try the full move, then the x part, then the y
/// part. A blocked component is shortened by bisection to the last free
/// position before contact.
inline Point slide_move(const MazeSpec& env, Point from, double dx, double dy) {
  if (!env.move_blocked(from, {from.x + dx, from.y + dy})) return {from.x + dx, from.y + dy};
  auto partial = [&](Point p, double mx, double my) {
    if (!env.move_blocked(p, {p.x + mx, p.y + my})) return Point{p.x + mx, p.y + my};
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 30; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (env.move_blocked(p, {p.x + mid * mx, p.y + mid * my})) hi = mid; else lo = mid;
    }
    return Point{p.x + lo * mx, p.y + lo * my};
  };
  Point p = partial(from, dx, 0.0);
  p = partial(p, 0.0, dy);
  return p;
}

struct MazeGenConfig {
  std::size_t num_traj = 400;
  std::size_t min_length = 50;
  std::size_t max_length = 300;
  double max_step = 0.1;
  double gain = 0.5;
  double noise_std = 0.03;
  double waypoint_jitter = 0.25;
  double validation_fraction = 0.2;
  std::size_t max_retries = 1000;
};

namespace detail {

// Breadth-first search over unit cells; neighbouring cells connect when the
// segment between their centres crosses no wall.
inline std::optional<std::vector<std::size_t>> cell_path(const MazeSpec& env, std::size_t from,
                                                          std::size_t to) {
  const std::size_t nx = env.cells_x(), ny = env.cells_y();
  auto centre = [&](std::size_t c) {
    return Point{env.bounds.x0 + static_cast<double>(c % nx) + 0.5,
                 env.bounds.y0 + static_cast<double>(c / nx) + 0.5};
  };
  std::vector<std::size_t> prev(nx * ny, SIZE_MAX);
  std::deque<std::size_t> q{from};
  prev[from] = from;
  while (!q.empty()) {
    const std::size_t c = q.front();
    q.pop_front();
    if (c == to) break;
    const std::size_t cx = c % nx, cy = c / nx;
    const std::size_t cand[4] = {cx > 0 ? c - 1 : SIZE_MAX, cx + 1 < nx ? c + 1 : SIZE_MAX,
                                 cy > 0 ? c - nx : SIZE_MAX, cy + 1 < ny ? c + nx : SIZE_MAX};
    for (std::size_t n : cand) {
      if (n == SIZE_MAX || prev[n] != SIZE_MAX) continue;
      if (env.crossings(centre(c), centre(n)) > 0) continue;
      prev[n] = c;
      q.push_back(n);
    }
  }
  if (prev[to] == SIZE_MAX) return std::nullopt;
  std::vector<std::size_t> path;
  for (std::size_t c = to; c != from; c = prev[c]) path.push_back(c);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace detail

/// Point-mass trajectories: the agent repeatedly picks a random free cell,
/// follows a cell-graph route there through jittered cell centres with a
/// clipped proportional step plus noise, and never crosses a wall.
inline TrajectoryDataset gen_maze(const MazeSpec& env, const MazeGenConfig& cfg, std::uint64_t seed) {
  env.validate();
  if (cfg.min_length < 2 || cfg.max_length < cfg.min_length) throw Error("gen_maze: bad length range");
  Rng rng(seed);
  const std::size_t nx = env.cells_x(), ny = env.cells_y();
  auto cell_of = [&](Point p) {
    const auto cx = std::min<std::size_t>(nx - 1, static_cast<std::size_t>(std::max(0.0, p.x - env.bounds.x0)));
    const auto cy = std::min<std::size_t>(ny - 1, static_cast<std::size_t>(std::max(0.0, p.y - env.bounds.y0)));
    return cy * nx + cx;
  };
  auto jittered_centre = [&](std::size_t c) {
    for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
      const Point p{env.bounds.x0 + static_cast<double>(c % nx) + 0.5 +
                        rng.uniform(-cfg.waypoint_jitter, cfg.waypoint_jitter),
                    env.bounds.y0 + static_cast<double>(c / nx) + 0.5 +
                        rng.uniform(-cfg.waypoint_jitter, cfg.waypoint_jitter)};
      if (env.is_free(p)) return p;
    }
    throw Error("gen_maze: could not place a free waypoint in cell " + std::to_string(c));
  };
  auto random_free_point = [&]() {
    for (std::size_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
      const Point p{rng.uniform(env.bounds.x0, env.bounds.x1), rng.uniform(env.bounds.y0, env.bounds.y1)};
      if (env.is_free(p)) return p;
    }
    throw Error("gen_maze: free-space sampling retries exhausted");
  };

  TrajectoryDataset ds;
  ds.obs_dim = 2;
  ds.meta = "maze";
  for (std::size_t j = 0; j < cfg.num_traj; ++j) {
    const std::size_t len =
        cfg.min_length + static_cast<std::size_t>(rng.uniform_index(cfg.max_length - cfg.min_length + 1));
    Trajectory traj;
    traj.id = static_cast<std::int64_t>(j);
    Point pos = random_free_point();
    traj.observations.push_back(to_vector(pos));
    std::vector<Point> route;
    std::size_t route_idx = 0;
    std::size_t stuck = 0;
    while (traj.length() < len) {
      if (route_idx >= route.size() || stuck > 40) {
        route.clear();
        route_idx = 0;
        stuck = 0;
        std::optional<std::vector<std::size_t>> cells;
        for (std::size_t attempt = 0; attempt < cfg.max_retries && !cells; ++attempt) {
          const std::size_t goal = static_cast<std::size_t>(rng.uniform_index(nx * ny));
          if (goal == cell_of(pos)) continue;
          cells = detail::cell_path(env, cell_of(pos), goal);
        }
        if (!cells) throw Error("gen_maze: goal sampling retries exhausted (no reachable cell)");
        for (std::size_t c : *cells) route.push_back(jittered_centre(c));
      }
      const Point target = route[route_idx];
      double dx = cfg.gain * (target.x - pos.x), dy = cfg.gain * (target.y - pos.y);
      const double mag = std::hypot(dx, dy);
      if (mag > cfg.max_step) {
        dx *= cfg.max_step / mag;
        dy *= cfg.max_step / mag;
      }
      dx += rng.normal(0.0, cfg.noise_std);
      dy += rng.normal(0.0, cfg.noise_std);
      const Point next = slide_move(env, pos, dx, dy);
      pos = next;
      traj.observations.push_back(to_vector(pos));
      ++stuck;
      if (std::hypot(target.x - pos.x, target.y - pos.y) < 0.2) {
        ++route_idx;
        stuck = 0;
      }
    }
    ds.trajectories.push_back(std::move(traj));
  }
  assign_split(ds, cfg.validation_fraction, seed);
  return ds;
}

// ---------------------------------------------------------------------------
// CSV time series

struct CsvReport {
  std::vector<std::string> kept_columns;
  std::vector<std::string> dropped_missing;
  std::vector<std::string> dropped_constant;
  std::vector<double> dropped_constant_value;
  std::vector<double> column_mean;
  std::vector<double> column_std;
  std::size_t num_rows = 0;

  std::size_t dropped() const { return dropped_missing.size() + dropped_constant.size(); }
};

struct CsvSeries {
  TrajectoryDataset dataset;
  std::vector<Vector> rows;  // full normalised series, one row per time step
  CsvReport report;
};

class CsvError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses a header-first CSV (rows = time steps), drops columns with any
/// missing or non-numeric cell and zero-variance columns, z-scores the rest,
/// and slices the series into windows of `window_len` with stride
/// max(1, window_len/2). The last `validation_fraction` of windows (by time)
/// form the validation split.
inline CsvSeries parse_csv_series(std::istream& in, std::size_t window_len,
                                  double validation_fraction = 0.2) {
  if (window_len < 2) throw CsvError("window length must be >= 2");
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) {
      header = detail::split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw CsvError("CSV has no header row");
  for (auto& h : header) h = detail::trim(h);
  const std::size_t ncol = header.size();
  std::vector<std::vector<std::optional<double>>> cols(ncol);
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != ncol)
      throw CsvError("malformed CSV at line " + std::to_string(line_no) + ": expected " +
                     std::to_string(ncol) + " fields, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < ncol; ++c) cols[c].push_back(detail::parse_number(cells[c]));
  }
  CsvSeries out;
  auto& rep = out.report;
  rep.num_rows = cols.empty() ? 0 : cols[0].size();
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < ncol; ++c) {
    const bool complete = std::all_of(cols[c].begin(), cols[c].end(), [](auto v) { return v.has_value(); });
    if (!complete || cols[c].empty()) {
      rep.dropped_missing.push_back(header[c]);
      continue;
    }
    double mean = 0.0;
    for (auto v : cols[c]) mean += *v;
    mean /= static_cast<double>(cols[c].size());
    double var = 0.0;
    for (auto v : cols[c]) var += (*v - mean) * (*v - mean);
    var /= static_cast<double>(cols[c].size());
    if (!(var > 1e-24)) {
      rep.dropped_constant.push_back(header[c]);
      rep.dropped_constant_value.push_back(mean);
      continue;
    }
    keep.push_back(c);
    rep.kept_columns.push_back(header[c]);
    rep.column_mean.push_back(mean);
    rep.column_std.push_back(std::sqrt(var));
  }
  if (keep.empty()) throw CsvError("CSV has no complete, non-constant numeric columns");
  for (std::size_t r = 0; r < rep.num_rows; ++r) {
    Vector row(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i)
      row[i] = (*cols[keep[i]][r] - rep.column_mean[i]) / rep.column_std[i];
    out.rows.push_back(std::move(row));
  }
  if (out.rows.size() < window_len)
    throw CsvError("CSV has " + std::to_string(out.rows.size()) + " rows, fewer than the window length " +
                   std::to_string(window_len));
  auto& ds = out.dataset;
  ds.obs_dim = keep.size();
  ds.meta = "csv";
  const std::size_t stride = std::max<std::size_t>(1, window_len / 2);
  for (std::size_t s = 0; s + window_len <= out.rows.size(); s += stride) {
    Trajectory t;
    t.id = static_cast<std::int64_t>(s);  // id = start row
    t.observations.assign(out.rows.begin() + static_cast<std::ptrdiff_t>(s),
                          out.rows.begin() + static_cast<std::ptrdiff_t>(s + window_len));
    ds.trajectories.push_back(std::move(t));
  }
  const std::size_t n = ds.trajectories.size();
  auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  if (n >= 2 && validation_fraction > 0.0 && n_val == 0) n_val = 1;
  if (n_val >= n) n_val = n - 1;
  for (std::size_t i = n - n_val; i < n; ++i) ds.trajectories[i].split = Split::validation;
  return out;
}

inline CsvSeries load_csv_series(const std::string& path, std::size_t window_len,
                                 double validation_fraction = 0.2) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open CSV: " + path);
  return parse_csv_series(in, window_len, validation_fraction);
}

}  // namespace gmc
