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

#include <cstdint>
#include <vector>

#include "warmflow/flowmatch.hpp"
#include "warmflow/numkit/adam.hpp"
#include "warmflow/numkit/mlp.hpp"
#include "warmflow/rollout.hpp"
#include "warmflow/toyworlds.hpp"

namespace warmflow {

struct PolicyTrainConfig {
  PriorSpec spec;
  int hidden_width = 1024;
  int hidden_layers = 4;
  int time_embed_dim = 128;
  double time_scale = 100.0;
  Activation activation = Activation::kGelu;
  AdamConfig adam{1e-4, 0.9, 0.999, 1e-8, 1e-5};
  TrainOptions train;
  std::uint64_t seed = 0;
};

struct TrainedPolicy {
  FlowPolicy policy;
  AdamState adam;
  std::vector<double> losses;
};

inline MlpConfig policy_mlp_config(const PolicyTrainConfig& cfg, int obs_dim) {
  MlpConfig m;
  m.chunk_rows = cfg.spec.prediction_length();
  m.action_dim = cfg.spec.action_dim;
  m.obs_dim = obs_dim;
  m.hidden_width = cfg.hidden_width;
  m.hidden_layers = cfg.hidden_layers;
  m.time_embed_dim = cfg.time_embed_dim;
  m.time_scale = cfg.time_scale;
  m.activation = cfg.activation;
  return m;
}

// Trains a flow policy on a chunked dataset built with the spec's
// prediction length. Init and minibatch streams are derived from cfg.seed.
inline TrainedPolicy train_policy(const ChunkedDataset& ds, const PolicyTrainConfig& cfg) {
  cfg.spec.validate();
  if (ds.prediction_length != cfg.spec.prediction_length())
    throw ConfigError("train_policy: dataset window length does not match the prior spec");
  Rng init_rng(cfg.seed, 1);
  Rng train_rng(cfg.seed, 2);
  TrainedPolicy out;
  out.policy.spec = cfg.spec;
  out.policy.action_norm = ds.action_norm;
  out.policy.obs_norm = ds.obs_norm;
  out.policy.params = MlpParams::init(policy_mlp_config(cfg, static_cast<int>(ds.obs_norm.dim())), init_rng);
  out.adam = AdamState::for_params(out.policy.params, cfg.adam);
  out.losses = train_flow(out.policy.params, out.adam, ds.data, cfg.spec, cfg.train, train_rng);
  return out;
}

}  // namespace warmflow
