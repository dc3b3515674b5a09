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
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "warmflow/flowmatch.hpp"
#include "warmflow/toyworlds.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// Trained network with the prior it was trained under and the normalizers of
// its dataset.
struct FlowPolicy {
  MlpParams params;
  PriorSpec spec;
  MinMaxNormalizer action_norm;
  MinMaxNormalizer obs_norm;
};

struct RolloutConfig {
  PriorSpec spec;
  int nfe = 1;
  int max_steps = 0;  // 0: the track length
  std::uint64_t seed = 0;

  void validate() const {
    spec.validate();
    if (nfe < 1) throw ConfigError("RolloutConfig: nfe must be >= 1");
  }
};

// Emitted once per generated chunk.
struct ChunkEvent {
  int chunk = 0;
  WarmMean mean;
  ActionChunk a0;
  ActionChunk prediction;
  std::optional<ActionChunk> previous;
  int executed = 0;
};

using ChunkHook = std::function<void(const ChunkEvent&)>;

struct EpisodeResult {
  bool success = false;
  bool collided = false;
  std::vector<NavState> trajectory;
  int switches = 0;
  int chunks = 0;
  // Mean |first height of chunk k - last executed height of chunk k-1|.
  double discontinuity = 0.0;
  int boundaries = 0;
};

// Number of above/below changes between consecutive classified columns inside
// each obstacle's span, summed over obstacles. Columns in the blocked band are
// collisions and are not classified.
inline int mode_switch_count(const std::vector<NavState>& trajectory, const NavWorld& world) {
  int switches = 0;
  for (const auto& o : world.obstacles) {
    int last = 0;
    for (const auto& s : trajectory) {
      if (!o.spans(s.x) || o.blocks(s.x, s.y)) continue;
      const int side = s.y > o.midline() ? 1 : -1;
      if (last != 0 && side != last) ++switches;
      last = side;
    }
  }
  return switches;
}

namespace detail {

inline Matrix normalized_obs(const FlowPolicy& policy, const NavWorld& world, const std::vector<NavState>& traj) {
  const Observation raw = nav_observation(world, traj);
  return policy.obs_norm.normalize(raw.transpose());
}

}  // namespace detail

inline void check_compatible(const FlowPolicy& policy, const NavWorld& world, const PriorSpec& spec) {
  const auto& cfg = policy.params.config;
  if (cfg.obs_dim != world.obs_dim() || cfg.chunk_rows != spec.prediction_length() ||
      cfg.action_dim != spec.action_dim || policy.obs_norm.dim() != world.obs_dim())
    throw ConfigError("policy dimensions do not match the environment or prior spec");
}

// Closed-loop chunked execution. The first chunk uses the Gaussian fallback;
// afterwards Past anchors on the previous prediction (= executed chunk) and
// Preview on rows H..2H-1 of the previous prediction.
inline EpisodeResult run_episode(const FlowPolicy& policy, const NavWorld& world, const RolloutConfig& config,
                                 Rng& rng, const ChunkHook& hook = {}) {
  config.validate();
  const PriorSpec& spec = config.spec;
  check_compatible(policy, world, spec);
  const int max_steps = config.max_steps > 0 ? config.max_steps : world.steps;

  EpisodeResult res;
  res.trajectory.push_back(nav_start(world, rng));
  std::optional<ActionChunk> prev;
  double last_height = 0.0;
  double disc_sum = 0.0;
  int steps = 0;
  bool done = false;
  while (!done && !res.collided && steps < max_steps) {
    const WarmMean mean = inference_mean(spec, prev);
    const ActionChunk a0 = sample_prior(spec, mean, rng);
    const Observation obs = detail::normalized_obs(policy, world, res.trajectory).row(0).transpose();
    ActionChunk pred = euler_sample(policy.params, a0, obs, config.nfe, false).a1;

    const Matrix heights = policy.action_norm.denormalize(pred.topRows(spec.horizon));
    const int budget = std::min(spec.horizon, max_steps - steps);
    std::vector<double> h(static_cast<std::size_t>(budget));
    for (int k = 0; k < budget; ++k) h[static_cast<std::size_t>(k)] = heights(k, 0);

    const NavStepResult step = nav_rollout_step(world, res.trajectory.back(), h);
    if (res.chunks > 0 && step.executed > 0) {
      disc_sum += std::abs(step.visited.front().y - last_height);
      ++res.boundaries;
    }
    if (step.executed > 0) last_height = step.visited.back().y;
    res.trajectory.insert(res.trajectory.end(), step.visited.begin(), step.visited.end());
    steps += step.executed;
    res.collided = step.collided;
    done = step.done;

    if (hook) hook(ChunkEvent{res.chunks, mean, a0, pred, prev, step.executed});
    prev = std::move(pred);
    ++res.chunks;
    if (step.executed == 0) break;
  }
  res.success = done && !res.collided;
  res.switches = mode_switch_count(res.trajectory, world);
  res.discontinuity = res.boundaries > 0 ? disc_sum / res.boundaries : 0.0;
  return res;
}

// Beta(k+1, n-k+1) posterior over a Bernoulli success rate under a uniform
// prior, pooled over all trials.
struct SuccessStats {
  long successes = 0;
  long trials = 0;
  double alpha = 1.0;
  double beta = 1.0;
  double posterior_mean = 0.5;
  double lower90 = 0.05;
  double upper90 = 0.95;
  std::vector<double> per_seed_sr;
  double seed_sr_mean = 0.0;
  double seed_sr_std = 0.0;

  static SuccessStats from_counts(long k, long n, std::vector<double> per_seed = {}) {
    if (k < 0 || n < 0 || k > n) throw ConfigError("SuccessStats: need 0 <= k <= n");
    SuccessStats s;
    s.successes = k;
    s.trials = n;
    s.alpha = static_cast<double>(k + 1);
    s.beta = static_cast<double>(n - k + 1);
    s.posterior_mean = s.alpha / (s.alpha + s.beta);
    s.lower90 = boost::math::ibeta_inv(s.alpha, s.beta, 0.05);
    s.upper90 = boost::math::ibeta_inv(s.alpha, s.beta, 0.95);
    s.per_seed_sr = std::move(per_seed);
    if (!s.per_seed_sr.empty()) {
      double m = 0.0;
      for (double v : s.per_seed_sr) m += v;
      m /= static_cast<double>(s.per_seed_sr.size());
      double var = 0.0;
      for (double v : s.per_seed_sr) var += (v - m) * (v - m);
      s.seed_sr_mean = m;
      s.seed_sr_std = s.per_seed_sr.size() > 1 ? std::sqrt(var / static_cast<double>(s.per_seed_sr.size() - 1)) : 0.0;
    }
    return s;
  }
};

// Beta(k+1, n-k+1) density evaluated pointwise on `grid`.
inline std::vector<double> beta_pdf(long k, long n, const std::vector<double>& grid) {
  if (k < 0 || n < 0 || k > n) throw ConfigError("beta_pdf: need 0 <= k <= n");
  const double a = static_cast<double>(k + 1);
  const double b = static_cast<double>(n - k + 1);
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  std::vector<double> pdf(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double y = grid[i];
    if (y < 0.0 || y > 1.0) throw ConfigError("beta_pdf: grid must lie in [0, 1]");
    const double la = a == 1.0 ? 0.0 : (y == 0.0 ? -INFINITY : (a - 1.0) * std::log(y));
    const double lb = b == 1.0 ? 0.0 : (y == 1.0 ? -INFINITY : (b - 1.0) * std::log1p(-y));
    pdf[i] = std::exp(log_norm + la + lb);
  }
  return pdf;
}

inline std::vector<double> unit_grid(int points) {
  if (points < 2) throw ConfigError("unit_grid: need at least two points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = static_cast<double>(i) / (points - 1);
  return g;
}

struct SwitchStats {
  std::vector<int> switches;
  int collisions = 0;

  double median() const {
    if (switches.empty()) return 0.0;
    std::vector<int> s = switches;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    return s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
  }
  double mean() const {
    if (switches.empty()) return 0.0;
    double acc = 0.0;
    for (int v : switches) acc += v;
    return acc / static_cast<double>(switches.size());
  }
};

struct EvalReport {
  SuccessStats success;
  SwitchStats switching;
  double mean_discontinuity = 0.0;
  std::vector<long> per_seed_successes;
  std::vector<long> per_seed_trials;
};

// Runs `episodes` rollouts per evaluation seed and pools all outcomes into
// one Beta posterior; per-seed success rates are kept alongside.
inline EvalReport evaluate(const FlowPolicy& policy, const NavWorld& world, const RolloutConfig& config,
                           int episodes, const std::vector<std::uint64_t>& seeds) {
  if (episodes < 1) throw ConfigError("evaluate: episodes must be >= 1");
  if (seeds.empty()) throw ConfigError("evaluate: need at least one seed");
  EvalReport rep;
  long k = 0, n = 0;
  double disc = 0.0;
  long disc_n = 0;
  std::vector<double> per_seed;
  for (auto seed : seeds) {
    const Rng base(seed, 0x5EED);
    long ks = 0;
    for (int e = 0; e < episodes; ++e) {
      Rng rng = base.split(static_cast<std::uint64_t>(e));
      const EpisodeResult r = run_episode(policy, world, config, rng);
      ks += r.success ? 1 : 0;
      rep.switching.switches.push_back(r.switches);
      rep.switching.collisions += r.collided ? 1 : 0;
      if (r.boundaries > 0) {
        disc += r.discontinuity;
        ++disc_n;
      }
    }
    k += ks;
    n += episodes;
    rep.per_seed_successes.push_back(ks);
    rep.per_seed_trials.push_back(episodes);
    per_seed.push_back(static_cast<double>(ks) / episodes);
  }
  rep.success = SuccessStats::from_counts(k, n, per_seed);
  rep.mean_discontinuity = disc_n > 0 ? disc / static_cast<double>(disc_n) : 0.0;
  return rep;
}

}  // namespace warmflow
