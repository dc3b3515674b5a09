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
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "warmflow/numkit/rng.hpp"
#include "warmflow/numkit/tensor.hpp"

namespace warmflow {

enum class Activation { kGelu, kRelu, kTanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "gelu";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "'");
}

// Shape of the velocity network v(t, a_t, o). The input row is
// [time embedding | flattened a_t | o]; the output is a flattened chunk.
struct MlpConfig {
  int chunk_rows = 1;
  int action_dim = 1;
  int obs_dim = 1;
  int hidden_width = 1024;
  int hidden_layers = 4;
  int time_embed_dim = 128;
  double time_scale = 100.0;
  Activation activation = Activation::kGelu;

  int chunk_dim() const { return chunk_rows * action_dim; }
  int input_dim() const { return time_embed_dim + chunk_dim() + obs_dim; }
  int output_dim() const { return chunk_dim(); }

  void validate() const {
    if (chunk_rows < 1 || action_dim < 1 || obs_dim < 0 || hidden_width < 1 ||
        hidden_layers < 0 || time_embed_dim < 0 || time_embed_dim % 2 != 0) {
      throw ConfigError("MlpConfig: invalid dimensions");
    }
  }

  bool operator==(const MlpConfig&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  RowVector bias;
};

struct MlpParams {
  MlpConfig config;
  std::vector<DenseLayer> layers;

  static MlpParams zeros(const MlpConfig& cfg) {
    cfg.validate();
    MlpParams p;
    p.config = cfg;
    int in = cfg.input_dim();
    for (int l = 0; l <= cfg.hidden_layers; ++l) {
      int out = l == cfg.hidden_layers ? cfg.output_dim() : cfg.hidden_width;
      p.layers.push_back({Matrix::Zero(out, in), RowVector::Zero(out)});
      in = out;
    }
    return p;
  }

  // Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static MlpParams init(const MlpConfig& cfg, Rng& rng) {
    MlpParams p = zeros(cfg);
    for (auto& layer : p.layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
        layer.weight.data()[i] = rng.uniform(-bound, bound);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        layer.bias[i] = rng.uniform(-bound, bound);
    }
    return p;
  }

  // Same shapes, all zeros.
  MlpParams zeros_like() const { return zeros(config); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  Vector flatten() const {
    Vector v(parameter_count());
    Eigen::Index k = 0;
    for (const auto& l : layers) {
      v.segment(k, l.weight.size()) = flat(l.weight).transpose();
      k += l.weight.size();
      v.segment(k, l.bias.size()) = l.bias.transpose();
      k += l.bias.size();
    }
    return v;
  }

  void assign(const Vector& v) {
    if (v.size() != parameter_count()) throw ConfigError("MlpParams::assign: size mismatch");
    Eigen::Index k = 0;
    for (auto& l : layers) {
      std::copy(v.data() + k, v.data() + k + l.weight.size(), l.weight.data());
      k += l.weight.size();
      std::copy(v.data() + k, v.data() + k + l.bias.size(), l.bias.data());
      k += l.bias.size();
    }
  }

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
};

// Sinusoidal embedding of t in [0, 1]: [sin(s t w_k), cos(s t w_k)] with
// w_k = 10000^(-k / half).
inline void time_embedding(double t, int dim, double scale, double* out) {
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double w = std::exp(-std::log(10000.0) * k / half);
    out[k] = std::sin(scale * t * w);
    out[half + k] = std::cos(scale * t * w);
  }
}

// Assembles network input rows. `chunks` holds one flattened a_t per row,
// `obs` one observation per row.
inline Matrix build_inputs(const MlpConfig& cfg, std::span<const double> ts,
                           const Matrix& chunks, const Matrix& obs) {
  const auto batch = static_cast<Eigen::Index>(ts.size());
  if (chunks.rows() != batch || obs.rows() != batch || chunks.cols() != cfg.chunk_dim() ||
      obs.cols() != cfg.obs_dim) {
    throw ConfigError("build_inputs: dimension mismatch");
  }
  Matrix x(batch, cfg.input_dim());
  for (Eigen::Index b = 0; b < batch; ++b) {
    time_embedding(ts[b], cfg.time_embed_dim, cfg.time_scale, &x(b, 0));
  }
  x.middleCols(cfg.time_embed_dim, cfg.chunk_dim()) = chunks;
  x.rightCols(cfg.obs_dim) = obs;
  return x;
}

namespace detail {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline void activate(Activation a, const Matrix& z, Matrix& h) {
  h.resize(z.rows(), z.cols());
  const double* zi = z.data();
  double* hi = h.data();
  const Eigen::Index n = z.size();
  switch (a) {
    case Activation::kGelu:
      for (Eigen::Index i = 0; i < n; ++i) hi[i] = gelu(zi[i]);
      break;
    case Activation::kRelu:
      for (Eigen::Index i = 0; i < n; ++i) hi[i] = zi[i] > 0.0 ? zi[i] : 0.0;
      break;
    case Activation::kTanh:
      for (Eigen::Index i = 0; i < n; ++i) hi[i] = std::tanh(zi[i]);
      break;
  }
}

// dz = dh * act'(z), in place on dh.
inline void activate_backward(Activation a, const Matrix& z, Matrix& dh) {
  const double* zi = z.data();
  double* di = dh.data();
  const Eigen::Index n = z.size();
  switch (a) {
    case Activation::kGelu:
      for (Eigen::Index i = 0; i < n; ++i) di[i] *= gelu_grad(zi[i]);
      break;
    case Activation::kRelu:
      for (Eigen::Index i = 0; i < n; ++i) di[i] = zi[i] > 0.0 ? di[i] : 0.0;
      break;
    case Activation::kTanh:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double th = std::tanh(zi[i]);
        di[i] *= 1.0 - th * th;
      }
      break;
  }
}

}  // namespace detail

// Layer inputs and pre-activations recorded by a forward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> preact;
};

// Batched forward pass over prepared input rows. Throws NumericError carrying
// the layer index if a non-finite value appears.
inline Matrix forward_batch(const MlpParams& params, const Matrix& x,
                            ForwardCache* cache = nullptr) {
  if (x.cols() != params.config.input_dim()) throw ConfigError("forward_batch: input width mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->preact.clear();
  }
  Matrix h = x;
  const auto n_layers = static_cast<std::ptrdiff_t>(params.layers.size());
  for (std::ptrdiff_t l = 0; l < n_layers; ++l) {
    const auto& layer = params.layers[l];
    Matrix z = h * layer.weight.transpose();
    z.rowwise() += layer.bias;
    if (!z.allFinite()) throw NumericError("non-finite activation in forward pass", l);
    if (cache) cache->inputs.push_back(std::move(h));
    if (l + 1 == n_layers) {
      h = std::move(z);
    } else {
      Matrix a;
      detail::activate(params.config.activation, z, a);
      if (cache) cache->preact.push_back(std::move(z));
      h = std::move(a);
    }
  }
  return h;
}

inline Matrix mlp_forward(const MlpParams& params, double t, const ActionChunk& a_t,
                          const Observation& o) {
  const auto& cfg = params.config;
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("mlp_forward: t outside [0, 1]");
  if (a_t.rows() != cfg.chunk_rows || a_t.cols() != cfg.action_dim || o.size() != cfg.obs_dim)
    throw ConfigError("mlp_forward: dimension mismatch");
  const double ts[1] = {t};
  Matrix chunk = flat(a_t);
  Matrix obs = o.transpose();
  Matrix y = forward_batch(params, build_inputs(cfg, ts, chunk, obs));
  return reshape(y.row(0), cfg.chunk_rows, cfg.action_dim);
}

// Regression batch for the flow-matching loss: one sample per row.
struct FmBatch {
  std::vector<double> t;
  Matrix a_t;     // batch x chunk_dim
  Matrix obs;     // batch x obs_dim
  Matrix target;  // batch x chunk_dim

  Eigen::Index size() const { return static_cast<Eigen::Index>(t.size()); }
};

struct LossGrad {
  double loss = 0.0;
  MlpParams grad;
};

// loss = (1/B) sum_b ||v(t_b, a_b, o_b) - target_b||^2 and its exact gradient.
inline LossGrad loss_and_grad(const MlpParams& params, const FmBatch& batch) {
  if (batch.size() == 0) throw ConfigError("loss_and_grad: empty batch");
  if (batch.target.rows() != batch.size() || batch.target.cols() != params.config.output_dim())
    throw ConfigError("loss_and_grad: target shape mismatch");
  ForwardCache cache;
  const Matrix x = build_inputs(params.config, batch.t, batch.a_t, batch.obs);
  const Matrix y = forward_batch(params, x, &cache);
  const Matrix resid = y - batch.target;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  LossGrad out;
  out.loss = resid.squaredNorm() * inv_b;
  out.grad = params.zeros_like();

  Matrix delta = (2.0 * inv_b) * resid;
  for (std::ptrdiff_t l = static_cast<std::ptrdiff_t>(params.layers.size()) - 1; l >= 0; --l) {
    auto& g = out.grad.layers[l];
    g.weight.noalias() = delta.transpose() * cache.inputs[l];
    g.bias = delta.colwise().sum();
    if (l == 0) break;
    Matrix upstream = delta * params.layers[l].weight;
    detail::activate_backward(params.config.activation, cache.preact[l - 1], upstream);
    delta = std::move(upstream);
  }
  return out;
}

}  // namespace warmflow
