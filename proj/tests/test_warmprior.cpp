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

#include "warmflow/warmprior.hpp"

using namespace warmflow;

namespace {

// Sample mean within 3 SE of 0 and sample covariance within 3 SE of I, with
// SE(var) = sqrt(2/n) and SE(cov) = sqrt(1/n) under N(0, 1).
void expect_standard_normal(const Matrix& z) {
  const double n = static_cast<double>(z.rows());
  const RowVector mean = z.colwise().mean();
  const Matrix c = z.rowwise() - mean;
  const Matrix cov = (c.transpose() * c) / (n - 1);
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    EXPECT_LT(std::abs(mean[j]), 3.0 / std::sqrt(n)) << "coord " << j;
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
      const double target = j == k ? 1.0 : 0.0;
      const double se = j == k ? std::sqrt(2.0 / n) : std::sqrt(1.0 / n);
      EXPECT_LT(std::abs(cov(j, k) - target), 3.0 * se) << "entry " << j << "," << k;
    }
  }
}

}  // namespace

TEST(Prior, EmptyWarmSetIsStandardNormal) {
  const PriorSpec spec{PriorVariant::kPast, 0.3, 2, 2};
  Rng rng(1);
  const int n = 100000;
  Matrix z(n, 4);
  for (int i = 0; i < n; ++i) z.row(i) = flat(sample_prior(spec, WarmMean::none(), rng));
  expect_standard_normal(z);
}

TEST(Prior, WarmAndColdCoordinateLaws) {
  const PriorSpec spec{PriorVariant::kPreview, 0.4, 2, 1};
  ActionChunk mu(2, 1);
  mu << 3.0, -7.5;
  const WarmMean m = WarmMean::prefix(mu);
  Rng rng(2);
  const int n = 100000;
  Matrix warm(n, 2), cold(n, 2);
  for (int i = 0; i < n; ++i) {
    const ActionChunk a0 = sample_prior(spec, m, rng);
    warm.row(i) = flat(ActionChunk((a0.topRows(2) - mu) / spec.sigma));
    cold.row(i) = flat(ActionChunk(a0.bottomRows(2)));
  }
  expect_standard_normal(warm);
  expect_standard_normal(cold);
}

TEST(Prior, ZeroSigmaPinsWarmRows) {
  const PriorSpec spec{PriorVariant::kPast, 0.0, 3, 1};
  ActionChunk mu(3, 1);
  mu << 0.1, 0.2, 0.3;
  Rng rng(3);
  EXPECT_EQ(sample_prior(spec, WarmMean::prefix(mu), rng), mu);
}

TEST(Prior, ComposeIsAffineInNoise) {
  const PriorSpec spec{PriorVariant::kPreview, 0.5, 2, 2};
  Rng rng(4);
  const ActionChunk mu = rng.normal_matrix(2, 2), eps = rng.normal_matrix(4, 2);
  const ActionChunk a0 = compose_prior(spec, WarmMean::prefix(mu), eps);
  EXPECT_LT((a0.topRows(2) - (mu + 0.5 * eps.topRows(2))).norm(), 1e-15);
  EXPECT_EQ(a0.bottomRows(2), eps.bottomRows(2));
}

TEST(Prior, RejectsInconsistentInputs) {
  const PriorSpec spec{PriorVariant::kPast, 0.5, 2, 1};
  Rng rng(5);
  EXPECT_THROW(compose_prior(spec, WarmMean::none(), rng.normal_matrix(3, 1)), ConfigError);
  EXPECT_THROW(compose_prior(spec, WarmMean::prefix(rng.normal_matrix(3, 1)), rng.normal_matrix(2, 1)),
               ConfigError);
  EXPECT_THROW((PriorSpec{PriorVariant::kPast, -0.1, 2, 1}).validate(), ConfigError);
  EXPECT_THROW((PriorSpec{PriorVariant::kPast, 0.5, 0, 1}).validate(), ConfigError);
  EXPECT_THROW(preview_train_mean(rng.normal_matrix(3, 1), 2), ConfigError);
  EXPECT_THROW(prior_variant_from_string("uniform"), ConfigError);
}

TEST(Prior, DefaultSigmas) {
  EXPECT_EQ(PriorSpec::make(PriorVariant::kPast, 8, 1).sigma, 0.5);
  EXPECT_EQ(PriorSpec::make(PriorVariant::kPreview, 8, 1).sigma, 1.0);
  EXPECT_EQ(PriorSpec::make(PriorVariant::kPreview, 8, 1).prediction_length(), 16);
  EXPECT_EQ(PriorSpec::make(PriorVariant::kPast, 8, 1).prediction_length(), 8);
}

TEST(EpisodeBufferTest, PastMeanNeverSpansTwoEpisodes) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> starts{0};
    std::size_t size = 0;
    const int episodes = 1 + static_cast<int>(rng.index(8));
    for (int e = 0; e < episodes; ++e) {
      size += 1 + rng.index(12);
      if (e + 1 < episodes) starts.push_back(size);
    }
    const auto n = static_cast<Eigen::Index>(size);
    const EpisodeBuffer buf(rng.normal_matrix(n, 1), rng.normal_matrix(n, 2), starts);
    const int h = 1 + static_cast<int>(rng.index(5));
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t start = buf.episode_start(buf.episode_of(i));
      const WarmMean m = past_train_mean(buf, i, h);
      if (i - start >= static_cast<std::size_t>(h)) {
        ASSERT_EQ(m.warm_rows, h) << "i=" << i;
        EXPECT_EQ(m.mu, buf.actions().middleRows(static_cast<Eigen::Index>(i) - h, h));
        EXPECT_EQ(buf.episode_of(i - h), buf.episode_of(i));
      } else {
        EXPECT_TRUE(m.empty()) << "i=" << i;
      }
    }
  }
}

TEST(EpisodeBufferTest, ValidatesStarts) {
  const Matrix a = Matrix::Zero(5, 1), o = Matrix::Zero(5, 1);
  EXPECT_THROW(EpisodeBuffer(a, o, {1}), ConfigError);
  EXPECT_THROW(EpisodeBuffer(a, o, {0, 3, 3}), ConfigError);
  EXPECT_THROW(EpisodeBuffer(a, o, {0, 5}), ConfigError);
  EXPECT_THROW(EpisodeBuffer(a, Matrix::Zero(4, 1), {0}), ConfigError);
  const EpisodeBuffer b(a, o, {0, 2});
  EXPECT_EQ(b.episode_of(1), 0u);
  EXPECT_EQ(b.episode_of(2), 1u);
  EXPECT_EQ(b.episode_end(1), 5u);
}

TEST(InferenceMean, ThreadsThePreviousPrediction) {
  Rng rng(7);
  const ActionChunk prev4 = rng.normal_matrix(4, 1), prev2 = rng.normal_matrix(2, 1);
  const PriorSpec preview{PriorVariant::kPreview, 1.0, 2, 1};
  const PriorSpec past{PriorVariant::kPast, 0.5, 2, 1};
  const PriorSpec gauss{PriorVariant::kGaussian, 1.0, 2, 1};
  EXPECT_TRUE(inference_mean(preview, std::nullopt).empty());
  EXPECT_TRUE(inference_mean(past, std::nullopt).empty());
  EXPECT_TRUE(inference_mean(gauss, prev2).empty());
  EXPECT_EQ(inference_mean(preview, prev4).mu, prev4.bottomRows(2));
  EXPECT_EQ(inference_mean(past, prev2).mu, prev2);
  EXPECT_THROW(inference_mean(past, prev4), ConfigError);
}

TEST(Normalizer, RoundTripAndRange) {
  Rng rng(8);
  Matrix raw = rng.normal_matrix(50, 3);
  raw.col(2).setConstant(4.0);  // degenerate column
  const auto n = MinMaxNormalizer::fit(raw);
  const Matrix z = n.normalize(raw);
  EXPECT_NEAR(z.col(0).minCoeff(), -1.0, 1e-15);
  EXPECT_NEAR(z.col(0).maxCoeff(), 1.0, 1e-15);
  EXPECT_LT((n.denormalize(z) - raw).lpNorm<Eigen::Infinity>(), 1e-12);
}
