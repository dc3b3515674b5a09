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
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "warmflow/flowmatch.hpp"
#include "warmflow/toyworlds.hpp"
#include "warmflow/warmprior.hpp"

namespace warmflow {

// ---------------------------------------------------------------------------
// Pathwise curvature

// kappa = (1/N) sum_k ||v_k - v_bar||^2 over the N Euler-step velocities, with
// v_bar their mean.
inline double velocity_variance(const std::vector<ActionChunk>& velocities) {
  if (velocities.empty()) return 0.0;
  ActionChunk mean = ActionChunk::Zero(velocities[0].rows(), velocities[0].cols());
  for (const auto& v : velocities) mean += v;
  mean /= static_cast<double>(velocities.size());
  double acc = 0.0;
  for (const auto& v : velocities) acc += (v - mean).squaredNorm();
  return acc / static_cast<double>(velocities.size());
}

template <typename Field>
double curvature(Field&& field, const ActionChunk& a0, int steps) {
  if (steps < 2) throw ConfigError("curvature: need at least 2 steps");
  return velocity_variance(euler_sample(field, a0, steps).path.velocities);
}

inline double curvature(const MlpParams& params, const Observation& o, const ActionChunk& a0, int steps) {
  if (steps < 2) throw ConfigError("curvature: need at least 2 steps");
  return velocity_variance(euler_sample(params, a0, o, steps).path.velocities);
}

struct CurvatureReport {
  std::vector<double> kappa;
  std::vector<std::size_t> tuple_ids;
  double mean = 0.0;

  // Mean curvature relative to `baseline`; a report normalized against
  // itself reads 1.
  double normalized(const CurvatureReport& baseline) const {
    return baseline.mean > 0.0 ? mean / baseline.mean : std::numeric_limits<double>::quiet_NaN();
  }
};

// Mean curvature over `count` observations drawn uniformly from the dataset,
// each with a fresh training-time prior draw.
inline CurvatureReport curvature_sweep(const MlpParams& params, const PriorSpec& spec, const FmDataset& data,
                                       int count, int steps, Rng& rng) {
  if (count < 1) throw ConfigError("curvature_sweep: need at least one observation");
  if (steps < 2) throw ConfigError("curvature_sweep: need at least 2 steps");
  const auto& cfg = params.config;
  CurvatureReport rep;
  Matrix x0(count, cfg.chunk_dim());
  Matrix obs(count, cfg.obs_dim);
  for (int m = 0; m < count; ++m) {
    const std::size_t id = rng.index(data.tuples.size());
    const auto& tup = data.tuples[id];
    rep.tuple_ids.push_back(id);
    x0.row(m) = flat(training_prior(spec, data.buffer, tup, rng).a0);
    obs.row(m) = tup.obs.transpose();
  }
  std::vector<Matrix> vel;
  euler_sample_batch(params, x0, obs, steps, &vel);
  Matrix vbar = Matrix::Zero(count, cfg.chunk_dim());
  for (const auto& v : vel) vbar += v;
  vbar /= static_cast<double>(steps);
  Vector acc = Vector::Zero(count);
  for (const auto& v : vel) acc += (v - vbar).rowwise().squaredNorm();
  acc /= static_cast<double>(steps);
  rep.kappa.assign(acc.data(), acc.data() + acc.size());
  rep.mean = acc.mean();
  return rep;
}

// ---------------------------------------------------------------------------
// Exact Bayes oracle for discrete targets

// Conditional law of A_0 given A_1 = y: N(offset + gain .* y, diag(scale^2)).
// gain = 0 gives a source independent of A_1; gain = 1 on a coordinate gives
// a warm mean that tracks the target (exact or offset forecast).
struct SourceLaw {
  Vector offset;
  Vector gain;
  Vector scale;

  static SourceLaw isotropic(const Vector& mean, double s) {
    return {mean, Vector::Zero(mean.size()), Vector::Constant(mean.size(), s)};
  }
  static SourceLaw standard(Eigen::Index d) { return isotropic(Vector::Zero(d), 1.0); }

  Eigen::Index dim() const { return offset.size(); }
  Vector mean_given(const Vector& y) const { return offset + gain.cwiseProduct(y); }
};

// Warm-mean construction for the WarmPrior source on the warm coordinates.
struct WarmAnchor {
  enum class Kind { kExactForecast, kOffset, kFixed };
  Kind kind = Kind::kExactForecast;
  Vector value;  // offset r for kOffset, the fixed mean for kFixed

  static WarmAnchor exact() { return {}; }
  static WarmAnchor offset(Vector r) { return {Kind::kOffset, std::move(r)}; }
  static WarmAnchor fixed(Vector mu) { return {Kind::kFixed, std::move(mu)}; }
};

// Source law of A_0 = P_W (mu + sigma Xi) + P_C Xi for a given anchor.
inline SourceLaw warm_source_law(Eigen::Index d, const Vector& warm_mask, double sigma, const WarmAnchor& anchor) {
  SourceLaw s{Vector::Zero(d), Vector::Zero(d), Vector::Ones(d)};
  for (Eigen::Index c = 0; c < d; ++c) {
    if (warm_mask[c] == 0.0) continue;
    s.scale[c] = sigma;
    switch (anchor.kind) {
      case WarmAnchor::Kind::kExactForecast: s.gain[c] = 1.0; break;
      case WarmAnchor::Kind::kOffset:
        s.gain[c] = 1.0;
        s.offset[c] = anchor.value[c];
        break;
      case WarmAnchor::Kind::kFixed: s.offset[c] = anchor.value[c]; break;
    }
  }
  return s;
}

namespace detail {

inline double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline Vector weighted_points(const MixtureTarget& target, const std::vector<double>& logw) {
  const double lse = log_sum_exp(logw);
  Vector out = Vector::Zero(target.dim());
  if (!std::isfinite(lse)) throw NumericError("posterior weights vanished", 0);
  for (Eigen::Index j = 0; j < target.components(); ++j)
    out += std::exp(logw[static_cast<std::size_t>(j)] - lse) * target.points.row(j).transpose();
  return out;
}

}  // namespace detail

// E[A_1 | A_t = x] for a discrete target under the linear interpolant:
// A_t | A_1 = y_j ~ N((1-t) m_j + t y_j, ((1-t) s)^2) per coordinate, weights
// w_j proportional to p_j times that density. Zero-scale coordinates act as
// exact constraints.
inline Vector mixture_posterior_mean(const Vector& x, double t, const MixtureTarget& target,
                                     const SourceLaw& source) {
  if (!(t < 1.0)) throw ConfigError("mixture_posterior_mean: t must be < 1");
  if (x.size() != target.dim() || source.dim() != target.dim())
    throw ConfigError("mixture_posterior_mean: dimension mismatch");
  const double u = 1.0 - t;
  std::vector<double> logw(static_cast<std::size_t>(target.components()));
  for (Eigen::Index j = 0; j < target.components(); ++j) {
    const Vector y = target.points.row(j).transpose();
    const Vector mean = u * source.mean_given(y) + t * y;
    double lw = std::log(target.probs[j]);
    for (Eigen::Index c = 0; c < x.size(); ++c) {
      const double sd = u * source.scale[c];
      const double r = x[c] - mean[c];
      if (sd == 0.0) {
        if (std::abs(r) > 1e-9 * (1.0 + std::abs(x[c]))) lw = -std::numeric_limits<double>::infinity();
      } else {
        lw += -0.5 * (r / sd) * (r / sd) - std::log(sd);
      }
    }
    logw[static_cast<std::size_t>(j)] = lw;
  }
  return detail::weighted_points(target, logw);
}

// Source-target joint law for the oracle estimators: either a Gaussian
// source described by SourceLaw, or the 1D monotone (quantile) coupling
// A_1 = F^{-1}(Phi(A_0)) with A_0 ~ N(0, 1).
struct Coupling {
  enum class Kind { kGaussianSource, kMonotone1D };
  Kind kind = Kind::kGaussianSource;
  MixtureTarget target;
  SourceLaw source;
  Vector warm_mask;  // 1 on warm coordinates; used by the warm-coordinate cost

  static Coupling independent(MixtureTarget target) {
    Coupling c;
    c.source = SourceLaw::standard(target.dim());
    c.warm_mask = Vector::Zero(target.dim());
    c.target = std::move(target);
    return c;
  }

  static Coupling warm(MixtureTarget target, const Vector& warm_mask, double sigma, const WarmAnchor& anchor) {
    Coupling c;
    c.source = warm_source_law(target.dim(), warm_mask, sigma, anchor);
    c.warm_mask = warm_mask;
    c.target = std::move(target);
    return c;
  }

  static Coupling monotone(MixtureTarget target) {
    if (target.dim() != 1) throw ConfigError("monotone coupling is defined for 1D targets only");
    Coupling c;
    c.kind = Kind::kMonotone1D;
    c.source = SourceLaw::standard(1);
    c.warm_mask = Vector::Zero(1);
    c.target = std::move(target);
    return c;
  }

  Eigen::Index dim() const { return target.dim(); }
  double warm_dim() const { return warm_mask.sum(); }

  struct Draw {
    Vector a0, a1, xi, mu;
  };

  Draw sample(Rng& rng) const {
    Draw d;
    if (kind == Kind::kMonotone1D) {
      d.a0 = Vector::Constant(1, rng.normal());
      d.a1 = Vector::Constant(1, quantile_component(d.a0[0]));
      d.xi = d.a0;
      d.mu = Vector::Zero(1);
      return d;
    }
    double u = rng.uniform();
    Eigen::Index j = 0;
    while (j + 1 < target.components() && u >= target.probs[j]) u -= target.probs[j++];
    d.a1 = target.points.row(j).transpose();
    d.mu = source.mean_given(d.a1);
    d.xi = Vector(dim());
    for (Eigen::Index c = 0; c < dim(); ++c) d.xi[c] = rng.normal();
    d.a0 = d.mu + source.scale.cwiseProduct(d.xi);
    return d;
  }

  Vector posterior_mean(const Vector& x, double t) const {
    if (kind == Kind::kGaussianSource) return mixture_posterior_mean(x, t, target, source);
    if (!(t < 1.0)) throw ConfigError("posterior_mean: t must be < 1");
    // Given A_1 = y_j, A_0 is N(0, 1) restricted to the quantile interval of
    // component j; weight j by that truncated density at a_j = (x - t y_j) / (1 - t).
    const auto order = sorted_components();
    std::vector<double> logw(static_cast<std::size_t>(target.components()),
                             -std::numeric_limits<double>::infinity());
    double lo_cdf = 0.0;
    const boost::math::normal_distribution<double> std_normal;
    for (auto j : order) {
      const double hi_cdf = lo_cdf + target.probs[j];
      const double lo = lo_cdf <= 0.0 ? -std::numeric_limits<double>::infinity()
                                      : boost::math::quantile(std_normal, lo_cdf);
      const double hi = hi_cdf >= 1.0 - 1e-15 ? std::numeric_limits<double>::infinity()
                                              : boost::math::quantile(std_normal, std::min(hi_cdf, 1.0));
      const double a = (x[0] - t * target.points(j, 0)) / (1.0 - t);
      if (a >= lo && a < hi) logw[static_cast<std::size_t>(j)] = -0.5 * a * a;
      lo_cdf = hi_cdf;
    }
    return detail::weighted_points(target, logw);
  }

 private:
  std::vector<Eigen::Index> sorted_components() const {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(target.components()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return target.points(a, 0) < target.points(b, 0); });
    return order;
  }

  double quantile_component(double a0) const {
    const boost::math::normal_distribution<double> std_normal;
    const double u = boost::math::cdf(std_normal, a0);
    double acc = 0.0;
    const auto order = sorted_components();
    for (auto j : order) {
      acc += target.probs[j];
      if (u < acc) return target.points(j, 0);
    }
    return target.points(order.back(), 0);
  }
};

// Trapezoid rule on a uniform grid over [0, t_max], Monte-Carlo over samples.
struct Quadrature {
  int grid = 256;
  double t_max = 0.999;
  int samples = 100000;

  void validate() const {
    if (grid < 2 || samples < 2 || !(t_max < 1.0) || !(t_max > 0.0))
      throw ConfigError("Quadrature: need grid >= 2, samples >= 2, 0 < t_max < 1");
  }

  std::vector<double> nodes() const {
    std::vector<double> t(static_cast<std::size_t>(grid));
    for (int g = 0; g < grid; ++g) t[static_cast<std::size_t>(g)] = t_max * g / (grid - 1);
    return t;
  }
  std::vector<double> weights() const {
    const double h = t_max / (grid - 1);
    std::vector<double> w(static_cast<std::size_t>(grid), h);
    w.front() = w.back() = 0.5 * h;
    return w;
  }
};

// Streaming mean and standard error.
struct MeanAccumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  long n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  void merge(const MeanAccumulator& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    n += o.n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  double se() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
    return std::sqrt(var / n);
  }
};

struct BranchingReport {
  double estimate = 0.0;
  double se = 0.0;
  bool warm_only = false;
  // Mean mismatch E||P_W (A_1 - mu)||^2 (exact over the mixture) and the
  // noise term sigma^2 d_W.
  double mismatch = 0.0;
  double noise_term = 0.0;
  double warm_dim = 0.0;
  Quadrature quadrature;
};

namespace detail {

inline Vector project(const Vector& v, const Vector* mask) { return mask ? v.cwiseProduct(*mask) : v; }

inline double exact_mismatch(const Coupling& c) {
  if (c.kind != Coupling::Kind::kGaussianSource) return 0.0;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < c.target.components(); ++j) {
    const Vector y = c.target.points.row(j).transpose();
    acc += c.target.probs[j] * (y - c.source.mean_given(y)).cwiseProduct(c.warm_mask).squaredNorm();
  }
  return acc;
}

inline double warm_sigma(const Coupling& c) {
  for (Eigen::Index k = 0; k < c.dim(); ++k)
    if (c.warm_mask[k] != 0.0) return c.source.scale[k];
  return 0.0;
}

}  // namespace detail

// Monte-Carlo estimate of int_0^{t_max} (1-t)^-2 E||P (A_1 - E[A_1 | A_t])||^2 dt,
// with P the identity or (warm_only) the warm projection.
inline BranchingReport branching_cost(const Coupling& coupling, const Quadrature& quad, Rng& rng,
                                      bool warm_only = false) {
  quad.validate();
  const auto nodes = quad.nodes();
  const auto weights = quad.weights();
  const Vector* mask = warm_only ? &coupling.warm_mask : nullptr;
  MeanAccumulator acc;
  for (int n = 0; n < quad.samples; ++n) {
    const auto d = coupling.sample(rng);
    double integral = 0.0;
    for (std::size_t g = 0; g < nodes.size(); ++g) {
      const double t = nodes[g];
      const Vector at = (1.0 - t) * d.a0 + t * d.a1;
      const Vector err = detail::project(d.a1 - coupling.posterior_mean(at, t), mask);
      integral += weights[g] * err.squaredNorm() / ((1.0 - t) * (1.0 - t));
    }
    acc.add(integral);
  }
  BranchingReport r;
  r.estimate = acc.mean();
  r.se = acc.se();
  r.warm_only = warm_only;
  r.quadrature = quad;
  r.warm_dim = coupling.warm_dim();
  r.mismatch = detail::exact_mismatch(coupling);
  const double s = detail::warm_sigma(coupling);
  r.noise_term = s * s * r.warm_dim;
  return r;
}

struct RiskEstimate {
  double estimate = 0.0;
  double se = 0.0;
};

// Direct Monte-Carlo flow-matching risk of the oracle field
// v*(x) = (E[A_1 | A_t = x] - x) / (1 - t) against the regression target A_1 - A_0.
inline RiskEstimate fm_risk_of_bayes_field(const Coupling& coupling, const Quadrature& quad, Rng& rng) {
  quad.validate();
  const auto nodes = quad.nodes();
  const auto weights = quad.weights();
  MeanAccumulator acc;
  for (int n = 0; n < quad.samples; ++n) {
    const auto d = coupling.sample(rng);
    const Vector direction = d.a1 - d.a0;
    double integral = 0.0;
    for (std::size_t g = 0; g < nodes.size(); ++g) {
      const double t = nodes[g];
      const Vector at = (1.0 - t) * d.a0 + t * d.a1;
      const Vector v_star = (coupling.posterior_mean(at, t) - at) / (1.0 - t);
      integral += weights[g] * (v_star - direction).squaredNorm();
    }
    acc.add(integral);
  }
  return {acc.mean(), acc.se()};
}

struct WarmBoundRow {
  double sigma = 0.0;
  double branching = 0.0;  // B_W estimate
  double branching_se = 0.0;
  double mismatch = 0.0;
  double noise_term = 0.0;
  double slack = 0.0;  // mismatch + noise - B_W
  // E||P_W (A_1 - A_t)||^2 / (1-t)^2 = E||P_W (A_1 - A_0)||^2, the surrogate
  // predictor's risk.
  double surrogate = 0.0;
  double surrogate_se = 0.0;
  // E<P_W (A_1 - mu), P_W Xi>, zero in expectation.
  double cross = 0.0;
  double cross_se = 0.0;
};

// Warm-coordinate branching cost against mismatch + sigma^2 d_W over a grid of
// sigma values, with the surrogate-predictor and cross-term estimates.
inline std::vector<WarmBoundRow> warm_bound_check(const MixtureTarget& target, const Vector& warm_mask,
                                                  const WarmAnchor& anchor, const std::vector<double>& sigmas,
                                                  const Quadrature& quad, Rng& rng) {
  if (sigmas.empty()) throw ConfigError("warm_bound_check: empty sigma grid");
  std::vector<WarmBoundRow> rows;
  for (double sigma : sigmas) {
    const Coupling c = Coupling::warm(target, warm_mask, sigma, anchor);
    const BranchingReport br = branching_cost(c, quad, rng, true);
    MeanAccumulator sur, cross;
    for (int n = 0; n < quad.samples; ++n) {
      const auto d = c.sample(rng);
      sur.add((d.a1 - d.a0).cwiseProduct(warm_mask).squaredNorm());
      cross.add((d.a1 - d.mu).cwiseProduct(warm_mask).dot(d.xi.cwiseProduct(warm_mask)));
    }
    WarmBoundRow r;
    r.sigma = sigma;
    r.branching = br.estimate;
    r.branching_se = br.se;
    r.mismatch = br.mismatch;
    r.noise_term = sigma * sigma * c.warm_dim();
    r.slack = r.mismatch + r.noise_term - r.branching;
    r.surrogate = sur.mean();
    r.surrogate_se = sur.se();
    r.cross = cross.mean();
    r.cross_se = cross.se();
    rows.push_back(r);
  }
  return rows;
}

}  // namespace warmflow
