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

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "warmflow/numkit/adam.hpp"
#include "warmflow/numkit/mlp.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// a_t = alpha(t) a0 + beta(t) a1. Only the linear schedule is provided.
struct Interpolant {
  enum class Kind { kLinear };
  Kind kind = Kind::kLinear;

  double alpha(double t) const { return 1.0 - t; }
  double beta(double t) const { return t; }
  double alpha_dot(double) const { return -1.0; }
  double beta_dot(double) const { return 1.0; }
};

inline ActionChunk interpolate(const Interpolant& interp, const ActionChunk& a0, const ActionChunk& a1,
                               double t) {
  require_shape(a0, a1, "interpolate");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("interpolate: t outside [0, 1]");
  return interp.alpha(t) * a0 + interp.beta(t) * a1;
}

inline ActionChunk target_velocity(const Interpolant& interp, const ActionChunk& a0, const ActionChunk& a1,
                                   double t) {
  require_shape(a0, a1, "target_velocity");
  return interp.alpha_dot(t) * a0 + interp.beta_dot(t) * a1;
}

// Euler integration record: states at t_0 = 0, ..., t_N = 1 and the velocity
// evaluated at each of the N steps.
struct FlowPath {
  std::vector<double> t;
  std::vector<ActionChunk> states;
  std::vector<ActionChunk> velocities;
};

// Long-format CSV: one row per (t, coordinate) with the flattened coordinate
// index.
inline void write_path_csv(std::ostream& os, const FlowPath& path, int path_id = 0) {
  for (std::size_t k = 0; k < path.states.size(); ++k) {
    const auto& s = path.states[k];
    for (Eigen::Index c = 0; c < s.size(); ++c) {
      os << path_id << ',' << path.t[k] << ',' << c << ',' << s.data()[c] << '\n';
    }
  }
}

struct SampleResult {
  ActionChunk a1;
  FlowPath path;
};

// Uniform-step explicit Euler: a_{k+1} = a_k + (1/nfe) v(t_k, a_k), t_k = k/nfe.
// `field` is any callable (double t, const ActionChunk& x) -> ActionChunk.
template <typename Field>
SampleResult euler_sample(Field&& field, const ActionChunk& a0, int nfe, bool record = true) {
  if (nfe < 1) throw ConfigError("euler_sample: nfe must be >= 1");
  const double dt = 1.0 / nfe;
  SampleResult out;
  ActionChunk x = a0;
  if (record) {
    out.path.t.push_back(0.0);
    out.path.states.push_back(x);
  }
  for (int k = 0; k < nfe; ++k) {
    const double t = static_cast<double>(k) / nfe;
    ActionChunk v = field(t, x);
    require_shape(v, x, "euler_sample");
    x += dt * v;
    if (!x.allFinite()) throw NumericError("non-finite state during Euler integration", k);
    if (record) {
      out.path.velocities.push_back(std::move(v));
      out.path.t.push_back(static_cast<double>(k + 1) / nfe);
      out.path.states.push_back(x);
    }
  }
  out.a1 = std::move(x);
  return out;
}

inline SampleResult euler_sample(const MlpParams& params, const ActionChunk& a0, const Observation& o,
                                 int nfe, bool record = true) {
  return euler_sample([&](double t, const ActionChunk& x) { return mlp_forward(params, t, x, o); }, a0, nfe,
                      record);
}

// Lockstep Euler over a batch: row b of `x0` is a flattened source sample for
// observation row b. If `velocities` is given it receives one M x D matrix per
// step.
inline Matrix euler_sample_batch(const MlpParams& params, const Matrix& x0, const Matrix& obs, int nfe,
                                 std::vector<Matrix>* velocities = nullptr) {
  if (nfe < 1) throw ConfigError("euler_sample_batch: nfe must be >= 1");
  const double dt = 1.0 / nfe;
  Matrix x = x0;
  std::vector<double> ts(static_cast<std::size_t>(x0.rows()));
  if (velocities) velocities->clear();
  for (int k = 0; k < nfe; ++k) {
    std::fill(ts.begin(), ts.end(), static_cast<double>(k) / nfe);
    Matrix v = forward_batch(params, build_inputs(params.config, ts, x, obs));
    x += dt * v;
    if (!x.allFinite()) throw NumericError("non-finite state during Euler integration", k);
    if (velocities) velocities->push_back(std::move(v));
  }
  return x;
}

// Supervised windows plus the buffer that backs Past retrieval.
struct FmDataset {
  EpisodeBuffer buffer;
  std::vector<TrainingTuple> tuples;
};

// Observes every sample of a training step: the tuple, its source draw and
// the sampled time.
using TrainHook = std::function<void(const TrainingTuple&, const PriorDraw&, double)>;

inline constexpr double kMaxTrainTime = 1.0 - 1e-6;

// One iteration of flow-matching training with a WarmPrior source. Returns the
// batch loss before the update.
inline double fm_train_step(MlpParams& params, AdamState& adam, const FmDataset& data, const PriorSpec& spec,
                            int batch_size, Rng& rng, const TrainHook& hook = {},
                            const Interpolant& interp = {}) {
  if (data.tuples.empty()) throw ConfigError("fm_train_step: empty dataset");
  if (batch_size < 1) throw ConfigError("fm_train_step: batch size must be >= 1");
  const auto& cfg = params.config;
  if (cfg.chunk_rows != spec.prediction_length() || cfg.action_dim != spec.action_dim)
    throw ConfigError("fm_train_step: network chunk shape does not match prior spec");

  FmBatch batch;
  batch.t.resize(static_cast<std::size_t>(batch_size));
  batch.a_t.resize(batch_size, cfg.chunk_dim());
  batch.obs.resize(batch_size, cfg.obs_dim);
  batch.target.resize(batch_size, cfg.chunk_dim());
  for (int b = 0; b < batch_size; ++b) {
    const auto& tuple = data.tuples[rng.index(data.tuples.size())];
    const PriorDraw draw = training_prior(spec, data.buffer, tuple, rng);
    double t = rng.uniform();
    while (t > kMaxTrainTime) t = rng.uniform();
    if (hook) hook(tuple, draw, t);
    batch.t[static_cast<std::size_t>(b)] = t;
    batch.a_t.row(b) = flat(interpolate(interp, draw.a0, tuple.a1, t));
    batch.target.row(b) = flat(target_velocity(interp, draw.a0, tuple.a1, t));
    batch.obs.row(b) = tuple.obs.transpose();
  }
  LossGrad lg = loss_and_grad(params, batch);
  adam_step(adam, params, lg.grad);
  return lg.loss;
}

struct TrainOptions {
  int iterations = 5000;
  int batch_size = 256;
};

inline std::vector<double> train_flow(MlpParams& params, AdamState& adam, const FmDataset& data,
                                      const PriorSpec& spec, const TrainOptions& opt, Rng& rng) {
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(opt.iterations));
  for (int it = 0; it < opt.iterations; ++it)
    losses.push_back(fm_train_step(params, adam, data, spec, opt.batch_size, rng));
  return losses;
}

}  // namespace warmflow
