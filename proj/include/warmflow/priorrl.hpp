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
#include <optional>
#include <string>
#include <vector>

#include "warmflow/flowmatch.hpp"
#include "warmflow/numkit/adam.hpp"
#include "warmflow/numkit/checkpoint.hpp"
#include "warmflow/numkit/mlp.hpp"
#include "warmflow/rollout.hpp"
#include "warmflow/toyworlds.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

enum class ResidualAnchor { kWarmMean, kOrigin };

inline const char* to_string(ResidualAnchor a) { return a == ResidualAnchor::kWarmMean ? "warm" : "origin"; }

inline ResidualAnchor residual_anchor_from_string(const std::string& s) {
  if (s == "warm") return ResidualAnchor::kWarmMean;
  if (s == "origin") return ResidualAnchor::kOrigin;
  throw ConfigError("unknown residual anchor '" + s + "'");
}

// Prior-space action a0 = anchor + delta with delta in [-bound, bound]^(H x d).
struct ResidualSpec {
  double bound = 0.5;
  ResidualAnchor anchor = ResidualAnchor::kWarmMean;
  bool augment = true;  // append the anchor mean to the learner's observation

  static ResidualSpec warm() { return {0.5, ResidualAnchor::kWarmMean, true}; }
  static ResidualSpec origin() { return {1.5, ResidualAnchor::kOrigin, false}; }

  void validate(const PriorSpec& policy_spec) const {
    if (!(bound > 0.0)) throw ConfigError("ResidualSpec: bound must be > 0");
    if (anchor == ResidualAnchor::kWarmMean && policy_spec.variant == PriorVariant::kGaussian)
      throw ConfigError("ResidualSpec: warm anchor needs a Past or Preview policy");
  }
};

// Deterministic Euler map from a prior sample to the full prediction.
inline ActionChunk noise_to_prediction(const MlpParams& params, const ActionChunk& a0, const Observation& o,
                                       int nfe) {
  return euler_sample(params, a0, o, nfe, false).a1;
}

// Executed rows of the prediction for prior sample a0.
inline ActionChunk noise_to_action(const MlpParams& params, const ActionChunk& a0, const Observation& o, int nfe,
                                   int horizon) {
  return noise_to_prediction(params, a0, o, nfe).topRows(horizon);
}

struct NoiseState {
  std::vector<NavState> trajectory;
  std::optional<ActionChunk> prev;
  int steps = 0;
  bool done = false;
  bool collided = false;
};

struct NoiseStep {
  double reward = 0.0;
  int executed = 0;
  ActionChunk a0;
};

// The frozen policy inside the toy world, seen from the prior sample. Actions
// are the executed-chunk rows of a0; Preview cold rows are held at zero.
struct NoiseSpaceMdp {
  FlowPolicy policy;
  NavWorld world;
  int nfe = 1;
  double success_bonus = 1.0;

  int horizon() const { return policy.spec.horizon; }
  int action_dim() const { return policy.spec.action_dim; }
  int delta_dim() const { return horizon() * action_dim(); }

  void validate(const ResidualSpec& rs) const {
    rs.validate(policy.spec);
    check_compatible(policy, world, policy.spec);
    if (nfe < 1) throw ConfigError("NoiseSpaceMdp: nfe must be >= 1");
  }

  NoiseState reset(Rng& rng) const {
    NoiseState s;
    s.trajectory.push_back(nav_start(world, rng));
    return s;
  }

  Observation observation(const NoiseState& s) const {
    return detail::normalized_obs(policy, world, s.trajectory).row(0).transpose();
  }

  // Anchor rows for the executed chunk: the warm mean, or zero for the origin
  // anchor and for the first chunk.
  ActionChunk anchor(const NoiseState& s, const ResidualSpec& rs) const {
    ActionChunk mu = ActionChunk::Zero(horizon(), action_dim());
    if (rs.anchor == ResidualAnchor::kWarmMean) {
      const WarmMean m = inference_mean(policy.spec, s.prev);
      if (!m.empty()) mu = m.mu.topRows(horizon());
    }
    return mu;
  }

  // Learner input [o, mu]; the mu slot is zero when not augmented.
  Vector augmented_obs(const NoiseState& s, const ResidualSpec& rs) const {
    const Observation o = observation(s);
    Vector out = Vector::Zero(o.size() + delta_dim());
    out.head(o.size()) = o;
    if (rs.augment) out.tail(delta_dim()) = flat(anchor(s, rs)).transpose();
    return out;
  }

  NoiseStep step(NoiseState& s, const ResidualSpec& rs, const ActionChunk& delta) const {
    if (s.done || s.collided) throw ConfigError("NoiseSpaceMdp::step: episode already over");
    const int h = horizon();
    ActionChunk clipped = delta.cwiseMax(-rs.bound).cwiseMin(rs.bound);
    NoiseStep out;
    out.a0 = ActionChunk::Zero(policy.spec.prediction_length(), action_dim());
    out.a0.topRows(h) = anchor(s, rs) + clipped;
    const ActionChunk pred = noise_to_prediction(policy.params, out.a0, observation(s), nfe);
    const Matrix heights = policy.action_norm.denormalize(pred.topRows(h));
    std::vector<double> hs(static_cast<std::size_t>(h));
    for (int k = 0; k < h; ++k) hs[static_cast<std::size_t>(k)] = heights(k, 0);
    const NavStepResult r = nav_rollout_step(world, s.trajectory.back(), hs);
    s.trajectory.insert(s.trajectory.end(), r.visited.begin(), r.visited.end());
    s.steps += r.executed;
    s.collided = r.collided;
    s.done = r.done || r.executed == 0;
    s.prev = pred;
    out.executed = r.executed;
    out.reward = static_cast<double>(r.collided ? std::max(0, r.executed - 1) : r.executed) / world.steps;
    if (r.done && !r.collided) out.reward += success_bonus;
    return out;
  }
};

// Small network delta = pi(o, mu), reusing the MLP with no time embedding: the
// chunk slot carries mu and the observation slot carries o.
struct ResidualLearner {
  MlpParams net;
  AdamState adam;

  static ResidualLearner make(const NoiseSpaceMdp& mdp, int width, int layers, double lr, Rng& rng) {
    MlpConfig cfg;
    cfg.chunk_rows = mdp.horizon();
    cfg.action_dim = mdp.action_dim();
    cfg.obs_dim = mdp.world.obs_dim();
    cfg.hidden_width = width;
    cfg.hidden_layers = layers;
    cfg.time_embed_dim = 0;
    cfg.activation = Activation::kTanh;
    ResidualLearner l;
    l.net = MlpParams::init(cfg, rng);
    // Start from the identity residual.
    l.net.layers.back().weight.setZero();
    l.net.layers.back().bias.setZero();
    l.adam = AdamState::for_params(l.net, AdamConfig{lr, 0.9, 0.999, 1e-8, 0.0});
    return l;
  }

  ActionChunk act(const Vector& aug_obs, const ResidualSpec& rs) const {
    const int d = net.config.chunk_dim();
    const int od = net.config.obs_dim;
    const ActionChunk mu = reshape(aug_obs.tail(d).transpose(), net.config.chunk_rows, net.config.action_dim);
    const Observation o = aug_obs.head(od);
    const Matrix raw = mlp_forward(net, 0.0, mu, o);
    return raw.cwiseMax(-rs.bound).cwiseMin(rs.bound);
  }

  // Full-batch regression of the network onto (aug_obs, delta) pairs.
  double distill(const std::vector<Vector>& inputs, const std::vector<ActionChunk>& targets, int steps) {
    if (inputs.empty()) return 0.0;
    const int d = net.config.chunk_dim();
    const int od = net.config.obs_dim;
    FmBatch b;
    const auto n = static_cast<Eigen::Index>(inputs.size());
    b.t.assign(inputs.size(), 0.0);
    b.a_t.resize(n, d);
    b.obs.resize(n, od);
    b.target.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& x = inputs[static_cast<std::size_t>(i)];
      b.obs.row(i) = x.head(od).transpose();
      b.a_t.row(i) = x.tail(d).transpose();
      b.target.row(i) = flat(targets[static_cast<std::size_t>(i)]);
    }
    double loss = 0.0;
    for (int s = 0; s < steps; ++s) {
      LossGrad lg = loss_and_grad(net, b);
      loss = lg.loss;
      adam_step(adam, net, lg.grad);
    }
    return loss;
  }
};

struct ResidualTransition {
  Vector aug_obs;
  ActionChunk delta;
  double reward = 0.0;
};

struct ResidualEpisode {
  double ret = 0.0;
  bool success = false;
  int env_steps = 0;
  std::vector<ResidualTransition> transitions;
  std::vector<ActionChunk> a0s;
  std::vector<ActionChunk> anchors;
};

// One episode with delta = clip(pi(o~) + explore * N(0, I)); explore = 0 is the
// greedy policy.
inline ResidualEpisode residual_episode(const ResidualLearner& learner, const NoiseSpaceMdp& mdp,
                                        const ResidualSpec& rs, double explore, Rng& rng) {
  ResidualEpisode ep;
  NoiseState s = mdp.reset(rng);
  while (!s.done && !s.collided && s.steps < mdp.world.steps) {
    const Vector aug = mdp.augmented_obs(s, rs);
    ActionChunk delta = learner.act(aug, rs);
    if (explore > 0.0) delta += explore * rng.normal_matrix(delta.rows(), delta.cols());
    delta = delta.cwiseMax(-rs.bound).cwiseMin(rs.bound);
    ep.anchors.push_back(mdp.anchor(s, rs));
    const NoiseStep st = mdp.step(s, rs, delta);
    ep.a0s.push_back(st.a0);
    ep.transitions.push_back({aug, delta, st.reward});
    ep.ret += st.reward;
    ep.env_steps += st.executed;
  }
  ep.success = s.done && !s.collided;
  return ep;
}

struct ResidualTrainConfig {
  int generations = 40;
  int population = 32;      // exploration episodes per generation
  double elite_frac = 0.25;
  double explore = 0.5;     // exploration std as a fraction of the bound
  double explore_final = 0.1;  // linearly annealed to this by the last generation
  int distill_steps = 100;
  int eval_every = 2;
  int eval_episodes = 32;
  int width = 64;
  int layers = 2;
  double lr = 3e-3;
  int final_window = 3;     // evaluations averaged into the final SR
};

struct CurvePoint {
  int generation = 0;
  long env_steps = 0;
  double success_rate = 0.0;
};

struct ResidualRun {
  std::uint64_t seed = 0;
  std::vector<CurvePoint> curve;
  bool diverged = false;
  std::string frozen_hash_before;
  std::string frozen_hash_after;

  double final_sr(int window) const {
    if (curve.empty()) return 0.0;
    const auto w = std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 1)), curve.size());
    double acc = 0.0;
    for (std::size_t i = curve.size() - w; i < curve.size(); ++i) acc += curve[i].success_rate;
    return acc / static_cast<double>(w);
  }

  // Env steps at the first evaluation reaching frac * final SR; -1 if never.
  long steps_to(double frac, int window) const {
    const double target = frac * final_sr(window);
    for (const auto& p : curve)
      if (p.success_rate >= target) return p.env_steps;
    return -1;
  }
};

inline double greedy_success_rate(const ResidualLearner& learner, const NoiseSpaceMdp& mdp, const ResidualSpec& rs,
                                  int episodes, std::uint64_t seed) {
  Rng base(seed, 0xE7A1);
  int k = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng r = base.split(static_cast<std::uint64_t>(e));
    k += residual_episode(learner, mdp, rs, 0.0, r).success ? 1 : 0;
  }
  return static_cast<double>(k) / episodes;
}

// Cross-entropy search over per-chunk residuals: each generation samples
// exploratory episodes around the current network, keeps the top returns, and
// distills their (o~, delta) pairs back into the network.
inline ResidualRun train_residual_seed(const NoiseSpaceMdp& mdp, const ResidualSpec& rs,
                                       const ResidualTrainConfig& cfg, std::uint64_t seed) {
  mdp.validate(rs);
  if (cfg.generations < 1 || cfg.population < 1 || cfg.eval_every < 1 || cfg.eval_episodes < 1)
    throw ConfigError("ResidualTrainConfig: budgets must be >= 1");
  ResidualRun run;
  run.seed = seed;
  run.frozen_hash_before = params_hash(mdp.policy.params);
  Rng init(seed, 0xC0DE);
  Rng explore_rng(seed, 0xE4B0);
  ResidualLearner learner = ResidualLearner::make(mdp, cfg.width, cfg.layers, cfg.lr, init);
  const int n_elite = std::max(1, static_cast<int>(std::lround(cfg.elite_frac * cfg.population)));
  long env_steps = 0;
  // Elites survive into the next generation's selection pool; on equal returns
  // fresh episodes win.
  std::vector<ResidualEpisode> elites;
  try {
    run.curve.push_back({0, 0, greedy_success_rate(learner, mdp, rs, cfg.eval_episodes, seed)});
    for (int g = 1; g <= cfg.generations; ++g) {
      const double frac = cfg.generations > 1 ? static_cast<double>(g - 1) / (cfg.generations - 1) : 1.0;
      const double explore = (cfg.explore + frac * (cfg.explore_final - cfg.explore)) * rs.bound;
      std::vector<ResidualEpisode> pool;
      for (int e = 0; e < cfg.population; ++e) {
        pool.push_back(residual_episode(learner, mdp, rs, explore, explore_rng));
        env_steps += pool.back().env_steps;
        if (!std::isfinite(pool.back().ret)) throw NumericError("non-finite return", g);
      }
      for (auto& ep : elites) pool.push_back(std::move(ep));
      std::stable_sort(pool.begin(), pool.end(),
                       [](const ResidualEpisode& a, const ResidualEpisode& b) { return a.ret > b.ret; });
      pool.resize(std::min(pool.size(), static_cast<std::size_t>(n_elite)));
      elites = std::move(pool);
      std::vector<Vector> xs;
      std::vector<ActionChunk> ys;
      for (const auto& ep : elites)
        for (const auto& tr : ep.transitions) {
          xs.push_back(tr.aug_obs);
          ys.push_back(tr.delta);
        }
      learner.distill(xs, ys, cfg.distill_steps);
      if (!learner.net.all_finite()) throw NumericError("non-finite learner parameters", g);
      if (g % cfg.eval_every == 0 || g == cfg.generations)
        run.curve.push_back({g, env_steps, greedy_success_rate(learner, mdp, rs, cfg.eval_episodes, seed)});
    }
  } catch (const NumericError&) {
    run.diverged = true;
  }
  run.frozen_hash_after = params_hash(mdp.policy.params);
  return run;
}

inline std::vector<ResidualRun> train_residual(const NoiseSpaceMdp& mdp, const ResidualSpec& rs,
                                               const ResidualTrainConfig& cfg,
                                               const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("train_residual: need at least one seed");
  std::vector<ResidualRun> runs;
  for (auto s : seeds) runs.push_back(train_residual_seed(mdp, rs, cfg, s));
  return runs;
}

}  // namespace warmflow
