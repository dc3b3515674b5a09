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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "warmflow/flowmatch.hpp"

using namespace warmflow;

namespace {

// Buffer of one episode with actions 0.1, 0.2, ... and scalar observations.
FmDataset ramp_dataset(int n, int window) {
  Matrix acts(n, 1), obs(n, 1);
  for (int i = 0; i < n; ++i) {
    acts(i, 0) = 0.1 * (i + 1);
    obs(i, 0) = static_cast<double>(i) / n;
  }
  FmDataset d{EpisodeBuffer(acts, obs, {0}), {}};
  for (int i = 0; i + window <= n; ++i)
    d.tuples.push_back({obs.row(i).transpose(), acts.middleRows(i, window), static_cast<std::size_t>(i)});
  return d;
}

MlpConfig tiny(int rows, int obs_dim) {
  MlpConfig c;
  c.chunk_rows = rows;
  c.obs_dim = obs_dim;
  c.hidden_width = 16;
  c.hidden_layers = 2;
  c.time_embed_dim = 4;
  c.time_scale = 1.0;
  return c;
}

}  // namespace

TEST(Interpolant, EndpointIdentities) {
  const Interpolant in;
  EXPECT_EQ(in.alpha(0), 1.0);
  EXPECT_EQ(in.beta(0), 0.0);
  EXPECT_EQ(in.alpha(1), 0.0);
  EXPECT_EQ(in.beta(1), 1.0);
  Rng rng(1);
  const ActionChunk a0 = rng.normal_matrix(3, 2), a1 = rng.normal_matrix(3, 2);
  EXPECT_EQ(interpolate(in, a0, a1, 0.0), a0);
  EXPECT_EQ(interpolate(in, a0, a1, 1.0), a1);
  EXPECT_LT((target_velocity(in, a0, a1, 0.3) - (a1 - a0)).norm(), 1e-15);
  EXPECT_THROW(interpolate(in, a0, a1, 1.1), ConfigError);
  EXPECT_THROW(interpolate(in, a0, rng.normal_matrix(2, 2), 0.5), ConfigError);
}

TEST(Euler, ConstantFieldIsExactForAnyStepCount) {
  ActionChunk a0(2, 1), c(2, 1);
  a0 << 0.5, -1.0;
  c << 2.0, 3.0;
  for (int nfe : {1, 2, 7, 50}) {
    const auto r = euler_sample([&](double, const ActionChunk&) { return c; }, a0, nfe);
    EXPECT_LT((r.a1 - (a0 + c)).norm(), 1e-12);
    EXPECT_EQ(r.path.states.size(), static_cast<std::size_t>(nfe + 1));
    EXPECT_EQ(r.path.velocities.size(), static_cast<std::size_t>(nfe));
  }
}

TEST(Euler, OtFieldTracesTheStraightSegment) {
  Rng rng(2);
  const ActionChunk a0 = rng.normal_matrix(4, 2), a1 = rng.normal_matrix(4, 2);
  const auto r = euler_sample([&](double, const ActionChunk&) { return ActionChunk(a1 - a0); }, a0, 13);
  for (std::size_t k = 0; k < r.path.states.size(); ++k)
    EXPECT_LT((r.path.states[k] - interpolate(Interpolant{}, a0, a1, r.path.t[k])).lpNorm<Eigen::Infinity>(),
              1e-12);
}

TEST(Euler, SingleStepIsOneFieldEvaluation) {
  Rng rng(3);
  MlpParams p = MlpParams::init(tiny(2, 1), rng);
  const ActionChunk a0 = rng.normal_matrix(2, 1);
  const Observation o = Observation::Constant(1, 0.4);
  const ActionChunk one = euler_sample(p, a0, o, 1).a1;
  EXPECT_LT((one - (a0 + mlp_forward(p, 0.0, a0, o))).norm(), 1e-14);
}

TEST(Euler, FirstOrderConvergenceOnLinearField) {
  // dx/dt = -x has x(1) = e^-1 x0 and Euler gives (1 - 1/N)^N x0.
  ActionChunk a0(1, 1);
  a0 << 1.0;
  auto field = [](double, const ActionChunk& x) { return ActionChunk(-x); };
  double prev_err = 0.0;
  for (int n : {8, 16, 32, 64}) {
    const double x = euler_sample(field, a0, n, false).a1(0, 0);
    EXPECT_NEAR(x, std::pow(1.0 - 1.0 / n, n), 1e-14);
    const double err = std::abs(x - std::exp(-1.0));
    if (prev_err > 0) {
      EXPECT_NEAR(prev_err / err, 2.0, 0.1);
    }
    prev_err = err;
  }
}

TEST(Euler, BatchMatchesPerSample) {
  Rng rng(4);
  const MlpParams p = MlpParams::init(tiny(3, 2), rng);
  const Matrix x0 = rng.normal_matrix(5, 3), obs = rng.normal_matrix(5, 2);
  std::vector<Matrix> vel;
  const Matrix out = euler_sample_batch(p, x0, obs, 4, &vel);
  ASSERT_EQ(vel.size(), 4u);
  for (int b = 0; b < 5; ++b) {
    const auto r = euler_sample(p, reshape(x0.row(b), 3, 1), obs.row(b).transpose(), 4);
    EXPECT_LT((flat(r.a1) - out.row(b)).norm(), 1e-12);
    EXPECT_LT((flat(r.path.velocities[2]) - vel[2].row(b)).norm(), 1e-12);
  }
}

TEST(Euler, RejectsBadStepCountAndDivergence) {
  const ActionChunk a0 = ActionChunk::Ones(1, 1);
  EXPECT_THROW(euler_sample([](double, const ActionChunk& x) { return x; }, a0, 0), ConfigError);
  auto blowup = [](double, const ActionChunk& x) { return ActionChunk(1e300 * x); };
  EXPECT_THROW(euler_sample(blowup, a0, 3), NumericError);
}

TEST(FlowMatching, BayesFieldOfDeterministicCouplingHasZeroLoss) {
  // Past with sigma = 0 and H = 1: a0 is the previous action, a1 the current
  // one, so v = a1 - a0 = 0.1 everywhere on the ramp.
  const FmDataset d = ramp_dataset(10, 1);
  FmDataset tail = d;
  tail.tuples.erase(tail.tuples.begin());  // drop the cold first index
  MlpConfig c = tiny(1, 1);
  c.hidden_layers = 0;
  MlpParams p = MlpParams::zeros(c);
  p.layers[0].bias[0] = 0.1;
  AdamState st = AdamState::for_params(p, AdamConfig{0.0, 0.9, 0.999, 1e-8, 0.0});
  const PriorSpec spec{PriorVariant::kPast, 0.0, 1, 1};
  Rng rng(5);
  for (int i = 0; i < 5; ++i) EXPECT_LT(fm_train_step(p, st, tail, spec, 16, rng), 1e-28);
}

TEST(FlowMatching, TrainHookSeesPreviewMeanFromTargetHead) {
  const FmDataset d = ramp_dataset(20, 4);
  const PriorSpec spec{PriorVariant::kPreview, 0.7, 2, 1};
  Rng rng(6);
  MlpParams p = MlpParams::init(tiny(4, 1), rng);
  AdamState st = AdamState::for_params(p, AdamConfig{});
  int seen = 0;
  auto hook = [&](const TrainingTuple& tup, const PriorDraw& draw, double t) {
    ++seen;
    ASSERT_EQ(draw.mean.warm_rows, 2);
    EXPECT_EQ(draw.mean.mu, tup.a1.topRows(2));
    EXPECT_LT((draw.a0.topRows(2) - (tup.a1.topRows(2) + 0.7 * draw.eps.topRows(2))).norm(), 1e-15);
    EXPECT_EQ(draw.a0.bottomRows(2), draw.eps.bottomRows(2));
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, kMaxTrainTime);
  };
  for (int i = 0; i < 3; ++i) fm_train_step(p, st, d, spec, 8, rng, hook);
  EXPECT_EQ(seen, 24);
}

TEST(FlowMatching, ShapeMismatchIsRejected) {
  const FmDataset d = ramp_dataset(10, 2);
  Rng rng(7);
  MlpParams p = MlpParams::init(tiny(2, 1), rng);
  AdamState st = AdamState::for_params(p, AdamConfig{});
  const PriorSpec preview{PriorVariant::kPreview, 1.0, 2, 1};  // needs 4 rows
  EXPECT_THROW(fm_train_step(p, st, d, preview, 4, rng), ConfigError);
  EXPECT_THROW(fm_train_step(p, st, FmDataset{}, PriorSpec{}, 4, rng), ConfigError);
}

TEST(FlowMatching, SameSeedSameLossSequence) {
  const FmDataset d = ramp_dataset(30, 2);
  const PriorSpec spec{PriorVariant::kPast, 0.5, 2, 1};
  auto run = [&] {
    Rng init(1, 1), rng(1, 2);
    MlpParams p = MlpParams::init(tiny(2, 1), init);
    AdamState st = AdamState::for_params(p, AdamConfig{1e-3, 0.9, 0.999, 1e-8, 0.0});
    return train_flow(p, st, d, spec, TrainOptions{50, 16}, rng);
  };
  EXPECT_EQ(run(), run());
}

TEST(FlowMatching, LossDecreasesOnUnimodalData) {
  const FmDataset d = ramp_dataset(40, 2);
  const PriorSpec spec = PriorSpec::make(PriorVariant::kGaussian, 2, 1);
  Rng init(3, 1), rng(3, 2);
  MlpParams p = MlpParams::init(tiny(2, 1), init);
  AdamState st = AdamState::for_params(p, AdamConfig{3e-3, 0.9, 0.999, 1e-8, 0.0});
  const auto losses = train_flow(p, st, d, spec, TrainOptions{5000, 32}, rng);
  const double head = std::accumulate(losses.begin(), losses.begin() + 100, 0.0) / 100;
  const double tail = std::accumulate(losses.end() - 100, losses.end(), 0.0) / 100;
  EXPECT_LT(tail, 0.5 * head);
}
