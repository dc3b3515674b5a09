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

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "warmflow/numkit/mlp.hpp"

namespace warmflow {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;

  bool operator==(const AdamConfig&) const = default;
};

// One Adam update with decoupled weight decay on a flat parameter block.
// `step` is the 1-based step index used for bias correction.
inline void adam_update(const AdamConfig& cfg, std::int64_t step, std::span<double> params,
                        std::span<const double> grad, std::span<double> m, std::span<double> v) {
  if (grad.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw ConfigError("adam_update: shape mismatch");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
  }
}

struct AdamState {
  AdamConfig config;
  std::vector<DenseLayer> m;
  std::vector<DenseLayer> v;
  std::int64_t step = 0;

  static AdamState for_params(const MlpParams& params, const AdamConfig& cfg) {
    AdamState s;
    s.config = cfg;
    s.m = params.zeros_like().layers;
    s.v = s.m;
    return s;
  }
};

namespace detail {
inline std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> span_of(RowVector& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<const double> span_of(const Matrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
inline std::span<const double> span_of(const RowVector& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
}  // namespace detail

inline void adam_step(AdamState& state, MlpParams& params, const MlpParams& grad) {
  if (state.m.size() != params.layers.size() || grad.layers.size() != params.layers.size())
    throw ConfigError("adam_step: layer count mismatch");
  ++state.step;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    using detail::span_of;
    adam_update(state.config, state.step, span_of(params.layers[l].weight),
                span_of(grad.layers[l].weight), span_of(state.m[l].weight),
                span_of(state.v[l].weight));
    adam_update(state.config, state.step, span_of(params.layers[l].bias),
                span_of(grad.layers[l].bias), span_of(state.m[l].bias), span_of(state.v[l].bias));
  }
}

}  // namespace warmflow
