// Copyright 2026 The reuse-bias-lab Authors
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

#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"

using namespace rbl;

namespace {

// Bandit buffer with hand-chosen actions, uniform behavior over A actions.
ReplayBuffer bandit_buffer(const Mdp& mdp, const std::vector<std::size_t>& actions) {
  std::vector<Trajectory> trajs;
  for (std::size_t a : actions) trajs.push_back({{{0, a, mdp.reward(0, a)}}, a + 1, false});
  auto behavior = std::make_shared<const ExplicitPolicy>(
      ExplicitPolicy::uniform(mdp.num_states(), mdp.num_actions()));
  return ReplayBuffer(std::move(trajs), {behavior}, mdp.gamma());
}

ExplicitPolicy bandit_policy(const Mdp& mdp, std::vector<double> row) {
  Table t(mdp.num_states(), mdp.num_actions(), 1.0 / double(mdp.num_actions()));
  for (std::size_t a = 0; a < row.size(); ++a) t(0, a) = row[a];
  return ExplicitPolicy(t);
}

Table random_logits(std::size_t S, std::size_t A, std::uint64_t seed) {
  Rng rng(seed);
  Table t(S, A);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace

TEST(IsEstimate, HandComputedBandit) {
  const Mdp m = build_bandit({1.0, 0.5, 0.0});
  const ReplayBuffer b = bandit_buffer(m, {0, 1, 2, 0});
  const ExplicitPolicy pi = bandit_policy(m, {0.5, 0.3, 0.2});
  // w = pi / (1/3)
  const double w0 = 1.5, w1 = 0.9, w2 = 0.6;
  const auto is = is_estimate(b, pi);
  EXPECT_NEAR(is.value, (w0 * 1.0 + w1 * 0.5 + w2 * 0.0 + w0 * 1.0) / 4.0, 1e-15);
  ASSERT_EQ(is.weights.size(), 4u);
  EXPECT_NEAR(is.weights[1], w1, 1e-15);
  const auto wis = wis_estimate(b, pi);
  EXPECT_NEAR(wis.value, (w0 + 0.5 * w1 + w0) / (w0 + w1 + w2 + w0), 1e-15);
  EXPECT_NEAR(epsilon2_loss(pi, b), (0.5 + 0.1 + 0.4 + 0.5) / 4.0, 1e-15);
}

TEST(IsEstimate, BehaviorTargetGivesSampleMean) {
  const Mdp g = build_gridworld(3, false);
  Rng rng(4);
  const TabularSoftmaxPolicy pi(9, 4);
  const ReplayBuffer b = sample_buffer(g, pi, 25, rng);
  double mean = 0.0;
  for (double r : b.returns()) mean += r / 25.0;
  EXPECT_NEAR(is_estimate(b, pi).value, mean, 1e-15);
  EXPECT_EQ(epsilon2_loss(pi, b), 0.0);
  EXPECT_EQ(l_br_loss(pi, b), 0.0);
}

TEST(WisEstimate, AllWeightsZeroThrows) {
  const Mdp m = build_bandit({1.0, 0.0});
  const ReplayBuffer b = bandit_buffer(m, {0, 0});
  try {
    wis_estimate(b, bandit_policy(m, {0.0, 1.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllWeightsZero);
  }
}

TEST(LbrLoss, HandComputed) {
  const Mdp m = build_bandit({1.0, 0.5, 0.0});
  const ReplayBuffer b = bandit_buffer(m, {0, 1, 1});
  const ExplicitPolicy pi = bandit_policy(m, {0.5, 0.3, 0.2});
  // recorded pairs: (0,0), (0,1), (0,1)
  EXPECT_NEAR(l_br_loss(pi, b), (0.5 + 0.1 + 0.1) / 3.0, 1e-15);
}

TEST(Kl, ExactMatchesDirectSumOnBandit) {
  const Mdp m = build_bandit({1.0, 0.5, 0.0});
  const ExplicitPolicy pi = bandit_policy(m, {0.5, 0.3, 0.2});
  const ExplicitPolicy beh = ExplicitPolicy::uniform(m.num_states(), 3);
  double kl = 0.0;
  for (double p : {0.5, 0.3, 0.2}) kl += p * std::log(p * 3.0);
  EXPECT_NEAR(kl_trajectory_exact(m, pi, beh, m.horizon_cap()), kl, 1e-15);
  EXPECT_EQ(kl_trajectory_exact(m, beh, beh, m.horizon_cap()), 0.0);
}

TEST(Kl, ExactMatchesMonteCarloOnChain) {
  const Mdp c = build_chain();
  const TabularSoftmaxPolicy pi(random_logits(3, 2, 3));
  const TabularSoftmaxPolicy beh(3, 2);
  const double exact = kl_trajectory_exact(c, pi, beh, c.horizon_cap());
  Rng rng(8);
  const McEstimate mc = kl_trajectory_mc(c, pi, beh, 50000, rng);
  EXPECT_GT(exact, 0.0);
  EXPECT_NEAR(mc.estimate, exact, 4 * mc.std_error);
}

TEST(Kl, SupportViolationIsInfinite) {
  const Mdp m = build_bandit({1.0, 0.0});
  Table t(m.num_states(), 2, 0.5);
  t(0, 0) = 1.0;
  t(0, 1) = 0.0;
  const ExplicitPolicy beh(t);
  EXPECT_TRUE(std::isinf(kl_trajectory_exact(m, ExplicitPolicy::uniform(m.num_states(), 2), beh, 1)));
}

TEST(Bounds, ReuseErrorBoundFormula) {
  const double m = 20, eps1 = 0.1, eps2 = 0.3, delta = 0.05;
  const double expect = std::sqrt((m * eps1 + std::log(m * m / delta)) / (m - 1)) + eps2;
  EXPECT_NEAR(reuse_error_bound({eps1, eps2, 20, delta}), expect, 1e-15);
  EXPECT_THROW(reuse_error_bound({0, 0, 1, 0.05}), Error);
}

TEST(Bounds, ReuseErrorBoundGrowsAsDeltaShrinks) {
  EXPECT_LT(reuse_error_bound({0.1, 0.1, 50, 0.1}), reuse_error_bound({0.1, 0.1, 50, 0.01}));
}

TEST(Bounds, FiniteHypothesis) {
  EXPECT_NEAR(finite_hypothesis_bound(100, 8, 0.05, 2.0),
              std::sqrt(4.0 / 200.0 * std::log(2.0 * 8 / 0.05)), 1e-15);
}

TEST(Bounds, ProductRatio) {
  EXPECT_NEAR(product_ratio_bound(0.1, 10), std::pow(1.1, 10) - 1.0, 1e-14);
  EXPECT_EQ(product_ratio_bound(0.0, 10), 0.0);
  EXPECT_NEAR(product_ratio_bound(0.5, 1), 0.5, 1e-15);
}

TEST(Ratios, SacClipping) {
  EXPECT_NEAR(sac_ratio(-1.0, -2.0, -5.0), std::exp(1.0), 1e-15);
  EXPECT_NEAR(sac_ratio(-1.0, -9.0, -5.0), std::exp(4.0), 1e-13);  // behavior clipped at -5
  EXPECT_NEAR(sac_ratio(-1.0, 0.5, -5.0), std::exp(-1.0), 1e-15);  // clipped at 0
  EXPECT_THROW(sac_ratio(0.0, 0.0, 1.0), Error);
}

TEST(Ratios, Gaussian) {
  const std::vector<double> a = {0.5, -1.0}, mt = {0.0, 0.0}, mb = {1.0, -1.0};
  const double dt = 0.25 + 1.0, db = 0.25 + 0.0;
  EXPECT_NEAR(gaussian_ratio(a, mt, mb), std::exp(0.5 * db - 0.5 * dt), 1e-15);
  EXPECT_NEAR(gaussian_ratio(a, mt, mb, 2.0), std::exp((0.5 * db - 0.5 * dt) / 4.0), 1e-15);
  EXPECT_EQ(gaussian_ratio(a, mt, mt), 1.0);
}

TEST(IsEstimate, UnbiasedForIndependentTarget) {
  const Mdp c = build_chain();
  const TabularSoftmaxPolicy pi(random_logits(3, 2, 21));
  const TabularSoftmaxPolicy beh(3, 2);
  const int n = 4000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Rng rng(77, "buffer", i);
    const double v = is_estimate(sample_buffer(c, beh, 10, rng), pi).value;
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
  EXPECT_NEAR(mean, exact_return(c, pi), 4 * se);
}
