// Copyright 2026 The WarmFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "warmflow/flowmatch.hpp"
#include "warmflow/numkit/checkpoint.hpp"
#include "warmflow/numkit/rng.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// Axis-aligned blocked region: x in [x_lo, x_hi], y in (y_lo, y_hi).
struct Obstacle {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double y_lo = 0.0;
  double y_hi = 0.0;

  static constexpr double kColumnEps = 1e-9;

  bool spans(double x) const { return x >= x_lo - kColumnEps && x <= x_hi + kColumnEps; }
  bool blocks(double x, double y) const { return spans(x) && y > y_lo && y < y_hi; }
  double midline() const { return 0.5 * (y_lo + y_hi); }
};

enum class ObsMode { kX, kXY };

// One-dimensional navigation track: the agent moves one column right per
// action and the action is its next height.
struct NavWorld {
  std::vector<Obstacle> obstacles{{0.25, 0.35, -0.3, 0.3}, {0.65, 0.75, -0.3, 0.3}};
  int steps = 100;
  double amplitude = 0.6;
  double ramp = 0.1;
  double jitter = 0.05;
  ObsMode obs_mode = ObsMode::kXY;
  int obs_steps = 2;
  // Initial height is drawn from U(-start_spread, start_spread); 0 starts on
  // the centerline.
  double start_spread = 0.0;
  // Per-demo pass side (+1 above, -1 below) for each obstacle.
  std::vector<std::vector<int>> demo_modes{{+1, +1}, {+1, -1}, {+1, +1}, {-1, -1}, {-1, +1}, {-1, -1}};

  double dx() const { return 1.0 / steps; }
  double x_at(int k) const { return static_cast<double>(k) / steps; }
  int state_dim() const { return obs_mode == ObsMode::kX ? 1 : 2; }
  int obs_dim() const { return state_dim() * obs_steps; }

  void validate() const {
    if (steps < 2) throw ConfigError("NavWorld: steps must be >= 2");
    if (obs_steps < 1) throw ConfigError("NavWorld: obs_steps must be >= 1");
    if (!(start_spread >= 0.0 && start_spread < 1.0)) throw ConfigError("NavWorld: start_spread must lie in [0, 1)");
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      const auto& o = obstacles[i];
      if (!(o.x_lo < o.x_hi) || !(o.y_lo < o.y_hi)) throw ConfigError("NavWorld: empty obstacle");
      if (o.y_lo <= -1.0 || o.y_hi >= 1.0) throw ConfigError("NavWorld: blocked band must lie inside (-1, 1)");
      for (std::size_t j = 0; j < i; ++j) {
        const auto& p = obstacles[j];
        if (o.x_lo <= p.x_hi && p.x_lo <= o.x_hi) throw ConfigError("NavWorld: obstacles overlap in x");
      }
    }
    for (const auto& m : demo_modes) {
      if (m.size() != obstacles.size()) throw ConfigError("NavWorld: demo mode list must cover every obstacle");
      for (int s : m)
        if (s != 1 && s != -1) throw ConfigError("NavWorld: demo modes must be +1 or -1");
    }
  }
};

struct NavState {
  int k = 0;
  double x = 0.0;
  double y = 0.0;
};

// Start of an episode. Draws from rng only when the world has a start spread.
inline NavState nav_start(const NavWorld& world, Rng& rng) {
  return NavState{0, 0.0, world.start_spread > 0.0 ? rng.uniform(-world.start_spread, world.start_spread) : 0.0};
}

inline bool in_collision(const NavWorld& world, const NavState& s) {
  for (const auto& o : world.obstacles)
    if (o.blocks(s.x, s.y)) return true;
  return false;
}

struct NavEpisode {
  std::vector<NavState> states;  // T + 1 states
  std::vector<double> actions;   // T actions; actions[k] = states[k + 1].y
  std::vector<int> modes;
  std::vector<double> amplitudes;
};

struct DemoSet {
  NavWorld world;
  std::vector<NavEpisode> episodes;
};

// Flat-topped bump: 1 across the obstacle span with raised-cosine ramps of
// width `ramp` on either side.
inline double obstacle_bump(const Obstacle& o, double ramp, double x) {
  if (x >= o.x_lo && x <= o.x_hi) return 1.0;
  const double d = x < o.x_lo ? o.x_lo - x : x - o.x_hi;
  if (ramp <= 0.0 || d >= ramp) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * d / ramp));
}

inline double demo_height(const NavWorld& world, const std::vector<int>& modes,
                          const std::vector<double>& amps, double x) {
  double y = 0.0;
  for (std::size_t j = 0; j < world.obstacles.size(); ++j)
    y += modes[j] * amps[j] * obstacle_bump(world.obstacles[j], world.ramp, x);
  return y;
}

inline DemoSet gen_nav_demos(const NavWorld& world, Rng& rng) {
  world.validate();
  for (const auto& o : world.obstacles) {
    const double clearance = std::max(o.y_hi, -o.y_lo);
    if (world.amplitude <= clearance || world.amplitude >= 1.0)
      throw ConfigError("gen_nav_demos: bump amplitude cannot clear the blocked band");
  }
  DemoSet set{world, {}};
  for (const auto& modes : world.demo_modes) {
    NavEpisode ep;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      ep = NavEpisode{};
      ep.modes = modes;
      for (std::size_t j = 0; j < world.obstacles.size(); ++j)
        ep.amplitudes.push_back(world.amplitude + world.jitter * rng.normal());
      ok = true;
      for (int k = 0; k <= world.steps; ++k) {
        const double x = world.x_at(k);
        NavState s{k, x, demo_height(world, modes, ep.amplitudes, x)};
        if (in_collision(world, s) || std::abs(s.y) > 1.0) ok = false;
        ep.states.push_back(s);
        if (k > 0) ep.actions.push_back(s.y);
      }
    }
    if (!ok) throw ConfigError("gen_nav_demos: could not draw a collision-free demo");
    set.episodes.push_back(std::move(ep));
  }
  return set;
}

struct NavStepResult {
  NavState state;
  bool collided = false;
  bool done = false;
  int executed = 0;
  std::vector<NavState> visited;
};

// Executes heights one column at a time, stopping at a collision or the end of
// the track. Heights are clamped to [-1, 1].
inline NavStepResult nav_rollout_step(const NavWorld& world, const NavState& state,
                                      std::span<const double> heights) {
  NavStepResult r;
  r.state = state;
  r.done = state.k >= world.steps;
  for (double h : heights) {
    if (r.done || r.collided) break;
    NavState next{r.state.k + 1, world.x_at(r.state.k + 1), std::clamp(h, -1.0, 1.0)};
    r.state = next;
    r.visited.push_back(next);
    ++r.executed;
    r.collided = in_collision(world, next);
    r.done = next.k >= world.steps;
  }
  return r;
}

// Stacked raw observation of the last `obs_steps` states; the earliest state
// is repeated when the history is shorter.
inline Observation nav_observation(const NavWorld& world, std::span<const NavState> history) {
  Observation o(world.obs_dim());
  const int sd = world.state_dim();
  const auto n = static_cast<int>(history.size());
  for (int f = 0; f < world.obs_steps; ++f) {
    const int idx = std::max(0, n - world.obs_steps + f);
    const NavState& s = history[static_cast<std::size_t>(idx)];
    o[f * sd] = s.x;
    if (sd == 2) o[f * sd + 1] = s.y;
  }
  return o;
}

struct ChunkedDataset {
  FmDataset data;
  MinMaxNormalizer action_norm;
  MinMaxNormalizer obs_norm;
  int horizon = 1;
  int prediction_length = 1;
  int skipped_episodes = 0;
};

// Windows of length P over an already normalized buffer.
inline ChunkedDataset window_dataset(EpisodeBuffer buffer, const MinMaxNormalizer& action_norm,
                                     const MinMaxNormalizer& obs_norm, int horizon, int prediction_length) {
  if (horizon < 1 || prediction_length < horizon) throw ConfigError("window_dataset: bad H/P");
  ChunkedDataset out;
  out.horizon = horizon;
  out.prediction_length = prediction_length;
  out.action_norm = action_norm;
  out.obs_norm = obs_norm;
  out.data.buffer = std::move(buffer);
  const EpisodeBuffer& buf = out.data.buffer;
  for (std::size_t e = 0; e < buf.starts().size(); ++e) {
    const std::size_t begin = buf.starts()[e];
    const std::size_t end = buf.episode_end(e);
    if (end - begin < static_cast<std::size_t>(prediction_length)) {
      ++out.skipped_episodes;
      continue;
    }
    for (std::size_t i = begin; i + prediction_length <= end; ++i) {
      TrainingTuple tup;
      tup.index = i;
      tup.obs = buf.observations().row(static_cast<Eigen::Index>(i)).transpose();
      tup.a1 = buf.actions().middleRows(static_cast<Eigen::Index>(i), prediction_length);
      out.data.tuples.push_back(std::move(tup));
    }
  }
  return out;
}

// Sliding windows of length P that never leave an episode. Tuple index i is
// the buffer index of the window start; its observation is the stacked state
// at that step.
inline ChunkedDataset gen_chunked_dataset(const DemoSet& demos, int horizon, int prediction_length) {
  if (horizon < 1 || prediction_length < horizon) throw ConfigError("gen_chunked_dataset: bad H/P");
  const NavWorld& world = demos.world;
  std::size_t total = 0;
  for (const auto& ep : demos.episodes) total += ep.actions.size();

  Matrix raw_actions(static_cast<Eigen::Index>(total), 1);
  Matrix raw_obs(static_cast<Eigen::Index>(total), world.obs_dim());
  std::vector<std::size_t> starts;
  std::size_t row = 0;
  for (const auto& ep : demos.episodes) {
    if (ep.actions.empty()) continue;
    starts.push_back(row);
    for (std::size_t k = 0; k < ep.actions.size(); ++k, ++row) {
      raw_actions(static_cast<Eigen::Index>(row), 0) = ep.actions[k];
      std::span<const NavState> hist(ep.states.data(), k + 1);
      raw_obs.row(static_cast<Eigen::Index>(row)) = nav_observation(world, hist).transpose();
    }
  }

  const MinMaxNormalizer an = MinMaxNormalizer::fit(raw_actions);
  const MinMaxNormalizer on = MinMaxNormalizer::fit(raw_obs);
  return window_dataset(EpisodeBuffer(an.normalize(raw_actions), on.normalize(raw_obs), starts), an, on, horizon,
                        prediction_length);
}

// Discrete law of A_1 given a fixed conditioning key: support points (rows)
// and their probabilities.
struct MixtureTarget {
  Matrix points;  // K x d
  Vector probs;
  std::string key = "default";

  Eigen::Index components() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  void validate() const {
    if (points.rows() < 1 || points.rows() != probs.size())
      throw ConfigError("MixtureTarget: need one probability per component");
    if ((probs.array() <= 0.0).any()) throw ConfigError("MixtureTarget: probabilities must be positive");
    if (std::abs(probs.sum() - 1.0) > 1e-12) throw ConfigError("MixtureTarget: probabilities must sum to 1");
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        if ((points.row(i) - points.row(j)).norm() == 0.0)
          throw ConfigError("MixtureTarget: components must be distinct");
  }
};

inline Json to_json(const MixtureTarget& m) {
  Json pts = Json::array();
  for (Eigen::Index i = 0; i < m.points.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.points.cols(); ++j) row.push_back(m.points(i, j));
    pts.push_back(row);
  }
  Json probs = Json::array();
  for (Eigen::Index i = 0; i < m.probs.size(); ++i) probs.push_back(m.probs[i]);
  return {{"key", m.key}, {"points", pts}, {"probs", probs}};
}

// Builds the configured mixture; an empty/absent config gives the symmetric
// two-point fixture {-1, +1}.
inline MixtureTarget gen_mixture_target(const Json& config = Json::object()) {
  MixtureTarget m;
  if (!config.contains("points")) {
    m.points = Matrix(2, 1);
    m.points << -1.0, 1.0;
    m.probs = Vector::Constant(2, 0.5);
  } else {
    const auto& pts = config.at("points");
    const auto& probs = config.at("probs");
    if (pts.empty()) throw ConfigError("gen_mixture_target: no components");
    const auto k = static_cast<Eigen::Index>(pts.size());
    const auto d = static_cast<Eigen::Index>(pts.at(0).size());
    m.points.resize(k, d);
    for (Eigen::Index i = 0; i < k; ++i) {
      if (static_cast<Eigen::Index>(pts.at(i).size()) != d)
        throw ConfigError("gen_mixture_target: ragged component list");
      for (Eigen::Index j = 0; j < d; ++j) m.points(i, j) = pts.at(i).at(j).get<double>();
    }
    if (static_cast<Eigen::Index>(probs.size()) != k)
      throw ConfigError("gen_mixture_target: need one probability per component");
    m.probs.resize(k);
    for (Eigen::Index i = 0; i < k; ++i) m.probs[i] = probs.at(i).get<double>();
  }
  m.key = config.value("key", std::string("default"));
  m.validate();
  return m;
}

inline const char* to_string(ObsMode m) { return m == ObsMode::kX ? "x" : "xy"; }

inline ObsMode obs_mode_from_string(const std::string& s) {
  if (s == "x") return ObsMode::kX;
  if (s == "xy") return ObsMode::kXY;
  throw ConfigError("unknown observation mode '" + s + "'");
}

inline Json to_json(const NavWorld& w) {
  Json obs = Json::array();
  for (const auto& o : w.obstacles) obs.push_back({{"x", {o.x_lo, o.x_hi}}, {"y", {o.y_lo, o.y_hi}}});
  return {{"obstacles", obs},     {"steps", w.steps},           {"amplitude", w.amplitude},
          {"ramp", w.ramp},       {"jitter", w.jitter},         {"obs_mode", to_string(w.obs_mode)},
          {"obs_steps", w.obs_steps}, {"start_spread", w.start_spread}, {"demo_modes", w.demo_modes}};
}

inline NavWorld nav_world_from_json(const Json& j) {
  NavWorld w;
  if (j.contains("obstacles")) {
    w.obstacles.clear();
    for (const auto& o : j.at("obstacles"))
      w.obstacles.push_back({o.at("x").at(0), o.at("x").at(1), o.at("y").at(0), o.at("y").at(1)});
  }
  w.steps = j.value("steps", w.steps);
  w.amplitude = j.value("amplitude", w.amplitude);
  w.ramp = j.value("ramp", w.ramp);
  w.jitter = j.value("jitter", w.jitter);
  w.obs_mode = obs_mode_from_string(j.value("obs_mode", std::string(to_string(w.obs_mode))));
  w.obs_steps = j.value("obs_steps", w.obs_steps);
  w.start_spread = j.value("start_spread", w.start_spread);
  if (j.contains("demo_modes")) w.demo_modes = j.at("demo_modes").get<std::vector<std::vector<int>>>();
  w.validate();
  return w;
}

inline Json to_json(const MinMaxNormalizer& n) {
  return {{"lo", std::vector<double>(n.lo.data(), n.lo.data() + n.lo.size())},
          {"hi", std::vector<double>(n.hi.data(), n.hi.data() + n.hi.size())}};
}

inline MinMaxNormalizer normalizer_from_json(const Json& j) {
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  if (lo.size() != hi.size()) throw ConfigError("normalizer: lo/hi size mismatch");
  MinMaxNormalizer n;
  n.lo = Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  n.hi = Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  return n;
}

// episodes.json (world, boundaries, per-demo modes, normalizers) and data.csv
// (step, episode, o..., a...) with raw, unnormalized values.
inline void write_demo_files(const std::filesystem::path& dir, const DemoSet& demos,
                             const ChunkedDataset& ds, const std::string& config_hash, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const EpisodeBuffer& buf = ds.data.buffer;
  Json ep = Json::array();
  for (std::size_t e = 0; e < demos.episodes.size(); ++e)
    ep.push_back({{"modes", demos.episodes[e].modes}, {"amplitudes", demos.episodes[e].amplitudes}});
  Json meta = {{"schema_version", 1},
               {"config_hash", config_hash},
               {"seed", seed},
               {"world", to_json(demos.world)},
               {"episode_starts", buf.starts()},
               {"size", buf.size()},
               {"episodes", ep},
               {"action_normalizer", to_json(ds.action_norm)},
               {"obs_normalizer", to_json(ds.obs_norm)}};
  std::ofstream(dir / "episodes.json") << meta.dump(2) << '\n';

  const Matrix obs = ds.obs_norm.denormalize(buf.observations());
  const Matrix act = ds.action_norm.denormalize(buf.actions());
  std::ofstream csv(dir / "data.csv");
  csv.precision(17);
  csv << "step,episode";
  for (Eigen::Index j = 0; j < obs.cols(); ++j) csv << ",o" << j;
  for (Eigen::Index j = 0; j < act.cols(); ++j) csv << ",a" << j;
  csv << ",config_hash,seed\n";
  for (std::size_t i = 0; i < buf.size(); ++i) {
    csv << i << ',' << buf.episode_of(i);
    for (Eigen::Index j = 0; j < obs.cols(); ++j) csv << ',' << obs(static_cast<Eigen::Index>(i), j);
    for (Eigen::Index j = 0; j < act.cols(); ++j) csv << ',' << act(static_cast<Eigen::Index>(i), j);
    csv << ',' << config_hash << ',' << seed << '\n';
  }
}

struct DemoFiles {
  NavWorld world;
  EpisodeBuffer buffer;
  MinMaxNormalizer action_norm;
  MinMaxNormalizer obs_norm;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// Reads the pair written by write_demo_files back into a normalized buffer.
inline DemoFiles read_demo_files(const std::filesystem::path& dir) {
  std::ifstream jin(dir / "episodes.json");
  if (!jin) throw ConfigError("missing " + (dir / "episodes.json").string());
  const Json meta = Json::parse(jin);
  const auto starts = meta.at("episode_starts").get<std::vector<std::size_t>>();
  const auto size = meta.at("size").get<std::size_t>();
  DemoFiles out;
  out.world = nav_world_from_json(meta.at("world"));
  out.action_norm = normalizer_from_json(meta.at("action_normalizer"));
  out.obs_norm = normalizer_from_json(meta.at("obs_normalizer"));
  out.config_hash = meta.value("config_hash", std::string());
  out.seed = meta.value("seed", std::uint64_t{0});
  const auto& an = out.action_norm;
  const auto& on = out.obs_norm;
  std::ifstream csv(dir / "data.csv");
  if (!csv) throw ConfigError("missing " + (dir / "data.csv").string());
  std::string line;
  std::getline(csv, line);
  Matrix obs(static_cast<Eigen::Index>(size), on.dim());
  Matrix act(static_cast<Eigen::Index>(size), an.dim());
  for (std::size_t i = 0; i < size; ++i) {
    if (!std::getline(csv, line)) throw ConfigError("data.csv: truncated");
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    const auto needed = static_cast<std::size_t>(2 + on.dim() + an.dim());
    while (vals.size() < needed && std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != needed) throw ConfigError("data.csv: bad row");
    for (Eigen::Index j = 0; j < on.dim(); ++j) obs(static_cast<Eigen::Index>(i), j) = vals[2 + j];
    for (Eigen::Index j = 0; j < an.dim(); ++j) act(static_cast<Eigen::Index>(i), j) = vals[2 + on.dim() + j];
  }
  out.buffer = EpisodeBuffer(an.normalize(act), on.normalize(obs), starts);
  return out;
}

inline EpisodeBuffer read_demo_buffer(const std::filesystem::path& dir) { return read_demo_files(dir).buffer; }

}  // namespace warmflow
