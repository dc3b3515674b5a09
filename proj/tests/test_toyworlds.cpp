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

#include <filesystem>

#include "warmflow/toyworlds.hpp"

using namespace warmflow;

TEST(NavDemos, DefaultSetShapeAndSafety) {
  const NavWorld world;
  Rng rng(1);
  const DemoSet demos = gen_nav_demos(world, rng);
  ASSERT_EQ(demos.episodes.size(), world.demo_modes.size());
  for (std::size_t e = 0; e < demos.episodes.size(); ++e) {
    const auto& ep = demos.episodes[e];
    EXPECT_EQ(ep.actions.size(), static_cast<std::size_t>(world.steps));
    EXPECT_EQ(ep.states.size(), static_cast<std::size_t>(world.steps + 1));
    EXPECT_EQ(ep.modes, world.demo_modes[e]);
    for (std::size_t k = 0; k < ep.actions.size(); ++k) EXPECT_EQ(ep.actions[k], ep.states[k + 1].y);
    for (const auto& s : ep.states) EXPECT_FALSE(in_collision(world, s));
    EXPECT_EQ(ep.states.front().y, 0.0);
  }
}

TEST(NavDemos, ActionsAreBimodalAtEveryObstacleColumn) {
  const NavWorld world;
  Rng rng(2);
  const DemoSet demos = gen_nav_demos(world, rng);
  int columns = 0;
  for (int k = 0; k <= world.steps; ++k) {
    const double x = world.x_at(k);
    for (const auto& o : world.obstacles) {
      if (!o.spans(x)) continue;
      ++columns;
      double lowest_above = INFINITY, highest_below = -INFINITY;
      int above = 0, below = 0;
      for (const auto& ep : demos.episodes) {
        const double y = ep.states[static_cast<std::size_t>(k)].y;
        if (y >= o.y_hi) ++above, lowest_above = std::min(lowest_above, y);
        if (y <= o.y_lo) ++below, highest_below = std::max(highest_below, y);
      }
      EXPECT_GT(above, 0) << "x=" << x;
      EXPECT_GT(below, 0) << "x=" << x;
      EXPECT_EQ(above + below, static_cast<int>(demos.episodes.size()));
      EXPECT_GT(lowest_above - highest_below, o.y_hi - o.y_lo);
    }
  }
  EXPECT_EQ(columns, 22);  // 11 columns per obstacle on a 100-step track
}

TEST(NavDemos, WindowCountAndBoundaries) {
  const NavWorld world;
  Rng rng(3);
  const DemoSet demos = gen_nav_demos(world, rng);
  for (int p : {1, 8, 16, 100, 101}) {
    const ChunkedDataset ds = gen_chunked_dataset(demos, std::min(p, 8), p);
    const std::size_t per_episode = p <= world.steps ? static_cast<std::size_t>(world.steps - p + 1) : 0;
    EXPECT_EQ(ds.data.tuples.size(), per_episode * demos.episodes.size()) << "P=" << p;
    EXPECT_EQ(ds.skipped_episodes, per_episode == 0 ? static_cast<int>(demos.episodes.size()) : 0);
    const auto& buf = ds.data.buffer;
    for (const auto& t : ds.data.tuples) {
      EXPECT_EQ(buf.episode_of(t.index), buf.episode_of(t.index + static_cast<std::size_t>(p) - 1));
      EXPECT_EQ(t.a1, buf.actions().middleRows(static_cast<Eigen::Index>(t.index), p));
    }
  }
}

TEST(NavDemos, NormalizedActionsCoverUnitRange) {
  Rng rng(4);
  const ChunkedDataset ds = gen_chunked_dataset(gen_nav_demos(NavWorld{}, rng), 4, 4);
  EXPECT_NEAR(ds.data.buffer.actions().minCoeff(), -1.0, 1e-12);
  EXPECT_NEAR(ds.data.buffer.actions().maxCoeff(), 1.0, 1e-12);
  const Matrix raw = ds.action_norm.denormalize(ds.data.buffer.actions());
  EXPECT_LT(raw.maxCoeff(), 1.0);
}

TEST(NavDemos, RejectsUnclearableAmplitude) {
  NavWorld w;
  w.amplitude = 0.2;
  Rng rng(5);
  EXPECT_THROW(gen_nav_demos(w, rng), ConfigError);
  w = NavWorld{};
  w.demo_modes = {{1}};
  EXPECT_THROW(w.validate(), ConfigError);
  w = NavWorld{};
  w.obstacles.push_back({0.3, 0.4, -0.2, 0.2});
  w.demo_modes = {{1, 1, 1}};
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(NavStep, StopsAtCollisionAndClamps) {
  const NavWorld world;
  // Column 25 (x = 0.25) is the first blocked one.
  NavState s{24, world.x_at(24), 0.0};
  std::vector<double> h{5.0};
  NavStepResult r = nav_rollout_step(world, s, h);
  EXPECT_EQ(r.executed, 1);
  EXPECT_FALSE(r.collided);
  EXPECT_EQ(r.state.y, 1.0);
  h = {0.0, 0.0};
  r = nav_rollout_step(world, r.state, h);
  EXPECT_TRUE(r.collided);
  EXPECT_EQ(r.executed, 1);
  NavState end{world.steps - 1, world.x_at(world.steps - 1), 0.0};
  r = nav_rollout_step(world, end, h);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.executed, 1);
}

TEST(NavObservation, StacksAndPadsHistory) {
  NavWorld w;
  w.obs_steps = 3;
  std::vector<NavState> hist{{0, 0.0, 0.1}, {1, 0.01, 0.2}};
  Observation o = nav_observation(w, hist);
  ASSERT_EQ(o.size(), 6);
  EXPECT_EQ(o[0], 0.0);
  EXPECT_EQ(o[1], 0.1);
  EXPECT_EQ(o[2], 0.0);
  EXPECT_EQ(o[4], 0.01);
  EXPECT_EQ(o[5], 0.2);
  w.obs_mode = ObsMode::kX;
  o = nav_observation(w, hist);
  ASSERT_EQ(o.size(), 3);
  EXPECT_EQ(o[2], 0.01);
}

TEST(NavStart, SpreadDrawsOnlyWhenEnabled) {
  NavWorld w;
  Rng a(1), b(1);
  EXPECT_EQ(nav_start(w, a).y, 0.0);
  EXPECT_EQ(a.uniform(), b.uniform());
  w.start_spread = 0.2;
  for (int i = 0; i < 100; ++i) EXPECT_LE(std::abs(nav_start(w, a).y), 0.2);
}

TEST(Serialization, WorldRoundTrip) {
  NavWorld w;
  w.steps = 60;
  w.obs_mode = ObsMode::kX;
  w.start_spread = 0.1;
  w.demo_modes = {{1, -1}};
  const NavWorld back = nav_world_from_json(to_json(w));
  EXPECT_EQ(to_json(back), to_json(w));
  EXPECT_THROW(nav_world_from_json(Json{{"obs_mode", "z"}}), ConfigError);
}

TEST(Serialization, MixtureRoundTrip) {
  const Json cfg = {{"key", "tri"}, {"points", {{-1.0, 0.5}, {0.0, 0.0}, {2.0, -1.0}}}, {"probs", {0.2, 0.3, 0.5}}};
  const MixtureTarget m = gen_mixture_target(cfg);
  EXPECT_EQ(m.components(), 3);
  EXPECT_EQ(m.dim(), 2);
  const MixtureTarget back = gen_mixture_target(to_json(m));
  EXPECT_EQ(back.points, m.points);
  EXPECT_EQ(back.probs, m.probs);
  EXPECT_EQ(back.key, "tri");
  const MixtureTarget two = gen_mixture_target();
  EXPECT_EQ(two.points(0, 0), -1.0);
  EXPECT_EQ(two.points(1, 0), 1.0);
}

TEST(Serialization, MixtureValidation) {
  EXPECT_THROW(gen_mixture_target(Json{{"points", {{0.0}, {1.0}}}, {"probs", {0.4, 0.4}}}), ConfigError);
  EXPECT_THROW(gen_mixture_target(Json{{"points", {{0.0}, {0.0}}}, {"probs", {0.5, 0.5}}}), ConfigError);
  EXPECT_THROW(gen_mixture_target(Json{{"points", {{0.0}, {1.0, 2.0}}}, {"probs", {0.5, 0.5}}}), ConfigError);
  EXPECT_THROW(gen_mixture_target(Json{{"points", {{0.0}, {1.0}}}, {"probs", {1.0, 0.0}}}), ConfigError);
}

TEST(Serialization, DemoFilesRoundTrip) {
  NavWorld w;
  w.obs_mode = ObsMode::kX;
  Rng rng(6);
  const DemoSet demos = gen_nav_demos(w, rng);
  const ChunkedDataset ds = gen_chunked_dataset(demos, 8, 8);
  const auto dir = std::filesystem::temp_directory_path() / "warmflow_demo_rt";
  std::filesystem::remove_all(dir);
  write_demo_files(dir, demos, ds, "feedface", 6);
  const DemoFiles back = read_demo_files(dir);
  EXPECT_EQ(back.config_hash, "feedface");
  EXPECT_EQ(back.seed, 6u);
  EXPECT_EQ(back.buffer.starts(), ds.data.buffer.starts());
  EXPECT_LT((back.buffer.actions() - ds.data.buffer.actions()).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LT((back.buffer.observations() - ds.data.buffer.observations()).lpNorm<Eigen::Infinity>(), 1e-12);
  const ChunkedDataset again = window_dataset(back.buffer, back.action_norm, back.obs_norm, 8, 8);
  EXPECT_EQ(again.data.tuples.size(), ds.data.tuples.size());
  std::filesystem::remove_all(dir);
}
