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
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "warmflow/numkit/rng.hpp"
#include "warmflow/numkit/tensor.hpp"

namespace warmflow {

enum class PriorVariant { kGaussian, kPast, kPreview };

inline const char* to_string(PriorVariant v) {
  switch (v) {
    case PriorVariant::kGaussian: return "gaussian";
    case PriorVariant::kPast: return "past";
    case PriorVariant::kPreview: return "preview";
  }
  return "gaussian";
}

inline PriorVariant prior_variant_from_string(const std::string& s) {
  if (s == "gaussian") return PriorVariant::kGaussian;
  if (s == "past") return PriorVariant::kPast;
  if (s == "preview") return PriorVariant::kPreview;
  throw ConfigError("unknown prior variant '" + s + "'");
}

// Source distribution of the flow. Preview predicts 2H rows and executes the
// first H; Gaussian and Past predict H rows.
struct PriorSpec {
  PriorVariant variant = PriorVariant::kGaussian;
  double sigma = 1.0;
  int horizon = 1;
  int action_dim = 1;

  static double default_sigma(PriorVariant v) {
    switch (v) {
      case PriorVariant::kPast: return 0.5;
      case PriorVariant::kPreview: return 1.0;
      case PriorVariant::kGaussian: return 1.0;
    }
    return 1.0;
  }

  static PriorSpec make(PriorVariant v, int horizon, int action_dim) {
    return {v, default_sigma(v), horizon, action_dim};
  }

  int prediction_length() const { return variant == PriorVariant::kPreview ? 2 * horizon : horizon; }

  void validate() const {
    if (horizon < 1 || action_dim < 1) throw ConfigError("PriorSpec: horizon and action_dim must be >= 1");
    if (!(sigma >= 0.0)) throw ConfigError("PriorSpec: sigma must be >= 0");
  }
};

// Mean on the warm prefix {0, ..., warm_rows - 1}; rows of `mu` are exactly
// the warm positions. warm_rows == 0 is the Gaussian fallback.
struct WarmMean {
  ActionChunk mu;
  int warm_rows = 0;

  static WarmMean none() { return {}; }
  static WarmMean prefix(ActionChunk mu) {
    const int rows = static_cast<int>(mu.rows());
    return {std::move(mu), rows};
  }

  bool empty() const { return warm_rows == 0; }
};

// a0[tau] = mu_tau + sigma eps_tau on warm rows, eps_tau on cold rows.
inline ActionChunk compose_prior(const PriorSpec& spec, const WarmMean& mean, const ActionChunk& eps) {
  if (eps.rows() != spec.prediction_length() || eps.cols() != spec.action_dim)
    throw ConfigError("compose_prior: noise shape does not match prediction length");
  if (mean.mu.rows() != mean.warm_rows)
    throw ConfigError("compose_prior: mean row count differs from warm set size");
  if (mean.warm_rows > spec.prediction_length())
    throw ConfigError("compose_prior: warm set larger than prediction length");
  ActionChunk a0 = eps;
  if (!mean.empty()) {
    if (mean.mu.cols() != spec.action_dim) throw ConfigError("compose_prior: mean action dim mismatch");
    a0.topRows(mean.warm_rows) = mean.mu + spec.sigma * eps.topRows(mean.warm_rows);
  }
  return a0;
}

inline ActionChunk sample_prior(const PriorSpec& spec, const WarmMean& mean, Rng& rng) {
  return compose_prior(spec, mean, rng.normal_matrix(spec.prediction_length(), spec.action_dim));
}

// Per-dimension min-max map of raw values onto [-1, 1].
struct MinMaxNormalizer {
  Vector lo;
  Vector hi;

  static MinMaxNormalizer fit(const Matrix& rows) {
    if (rows.rows() == 0) throw ConfigError("MinMaxNormalizer::fit: no data");
    MinMaxNormalizer n;
    n.lo = rows.colwise().minCoeff().transpose();
    n.hi = rows.colwise().maxCoeff().transpose();
    return n;
  }

  static MinMaxNormalizer identity(Eigen::Index dim) {
    return {Vector::Constant(dim, -1.0), Vector::Constant(dim, 1.0)};
  }

  Eigen::Index dim() const { return lo.size(); }

  double span(Eigen::Index j) const {
    const double s = hi[j] - lo[j];
    return s > 1e-12 ? s : 1.0;
  }

  Matrix normalize(const Matrix& raw) const {
    Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index i = 0; i < raw.rows(); ++i)
      for (Eigen::Index j = 0; j < raw.cols(); ++j)
        out(i, j) = 2.0 * (raw(i, j) - lo[j]) / span(j) - 1.0;
    return out;
  }

  Matrix denormalize(const Matrix& norm) const {
    Matrix out(norm.rows(), norm.cols());
    for (Eigen::Index i = 0; i < norm.rows(); ++i)
      for (Eigen::Index j = 0; j < norm.cols(); ++j)
        out(i, j) = lo[j] + 0.5 * (norm(i, j) + 1.0) * span(j);
    return out;
  }
};

// Concatenated demonstrations. `starts` holds sorted episode start indices
// (first = 0); actions are stored normalized.
class EpisodeBuffer {
 public:
  EpisodeBuffer() = default;
  EpisodeBuffer(Matrix actions, Matrix observations, std::vector<std::size_t> starts)
      : actions_(std::move(actions)), observations_(std::move(observations)), starts_(std::move(starts)) {
    if (actions_.rows() != observations_.rows())
      throw ConfigError("EpisodeBuffer: action and observation counts differ");
    if (actions_.rows() > 0 && (starts_.empty() || starts_.front() != 0))
      throw ConfigError("EpisodeBuffer: first episode must start at 0");
    for (std::size_t e = 1; e < starts_.size(); ++e)
      if (starts_[e] <= starts_[e - 1]) throw ConfigError("EpisodeBuffer: starts must be strictly increasing");
    if (!starts_.empty() && starts_.back() >= size())
      throw ConfigError("EpisodeBuffer: episode start beyond buffer end");
  }

  std::size_t size() const { return static_cast<std::size_t>(actions_.rows()); }
  std::size_t episode_count() const { return starts_.size(); }
  const Matrix& actions() const { return actions_; }
  const Matrix& observations() const { return observations_; }
  const std::vector<std::size_t>& starts() const { return starts_; }

  // Episode containing buffer index i (binary search over starts).
  std::size_t episode_of(std::size_t i) const {
    if (i >= size()) throw ConfigError("EpisodeBuffer: index out of range");
    auto it = std::upper_bound(starts_.begin(), starts_.end(), i);
    return static_cast<std::size_t>(std::distance(starts_.begin(), it)) - 1;
  }

  std::size_t episode_start(std::size_t e) const { return starts_.at(e); }
  std::size_t episode_end(std::size_t e) const { return e + 1 < starts_.size() ? starts_[e + 1] : size(); }

 private:
  Matrix actions_;
  Matrix observations_;
  std::vector<std::size_t> starts_;
};

// Mu from the H actions preceding buffer index i, or the Gaussian fallback when
// that window is not contained in i's episode.
inline WarmMean past_train_mean(const EpisodeBuffer& buffer, std::size_t i, int horizon) {
  const auto h = static_cast<std::size_t>(horizon);
  if (i >= buffer.size() || i < h) return WarmMean::none();
  const std::size_t start = buffer.episode_start(buffer.episode_of(i));
  if (i - h < start) return WarmMean::none();
  return WarmMean::prefix(buffer.actions().middleRows(static_cast<Eigen::Index>(i - h), horizon));
}

inline WarmMean preview_train_mean(const ActionChunk& a1, int horizon) {
  if (a1.rows() != 2 * horizon) throw ConfigError("preview_train_mean: target must have 2H rows");
  return WarmMean::prefix(a1.topRows(horizon));
}

inline WarmMean preview_infer_mean(const std::optional<ActionChunk>& prev, int horizon) {
  if (!prev) return WarmMean::none();
  if (prev->rows() != 2 * horizon) throw ConfigError("preview_infer_mean: previous prediction must have 2H rows");
  return WarmMean::prefix(prev->bottomRows(horizon));
}

inline WarmMean past_infer_mean(const std::optional<ActionChunk>& prev_executed, int horizon) {
  if (!prev_executed) return WarmMean::none();
  if (prev_executed->rows() != horizon) throw ConfigError("past_infer_mean: previous chunk must have H rows");
  return WarmMean::prefix(*prev_executed);
}

// One supervised sample: observation, target chunk (P rows) and the buffer
// index of the window start.
struct TrainingTuple {
  Observation obs;
  ActionChunk a1;
  std::size_t index = 0;
};

struct PriorDraw {
  ActionChunk a0;
  ActionChunk eps;
  WarmMean mean;
};

// Training-time source for one tuple: Gaussian, Past (buffer window) or
// Preview (first half of the target).
inline PriorDraw training_prior(const PriorSpec& spec, const EpisodeBuffer& buffer,
                                const TrainingTuple& tuple, Rng& rng) {
  PriorDraw d;
  switch (spec.variant) {
    case PriorVariant::kGaussian: d.mean = WarmMean::none(); break;
    case PriorVariant::kPast: d.mean = past_train_mean(buffer, tuple.index, spec.horizon); break;
    case PriorVariant::kPreview: d.mean = preview_train_mean(tuple.a1, spec.horizon); break;
  }
  d.eps = rng.normal_matrix(spec.prediction_length(), spec.action_dim);
  d.a0 = compose_prior(spec, d.mean, d.eps);
  return d;
}

// Inference-time mean given the previous prediction (Preview) or previously
// executed chunk (Past); empty on the first chunk.
inline WarmMean inference_mean(const PriorSpec& spec, const std::optional<ActionChunk>& prev) {
  switch (spec.variant) {
    case PriorVariant::kGaussian: return WarmMean::none();
    case PriorVariant::kPast: return past_infer_mean(prev, spec.horizon);
    case PriorVariant::kPreview: return preview_infer_mean(prev, spec.horizon);
  }
  return WarmMean::none();
}

}  // namespace warmflow
