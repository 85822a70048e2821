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
#include "rbl/mdp.hpp"
#include "rbl/policy.hpp"

using namespace rbl;

namespace {

Table random_logits(std::size_t S, std::size_t A, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Table t(S, A);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

ReplayBuffer bandit_buffer(const std::vector<std::size_t>& actions, std::size_t num_actions) {
  std::vector<Trajectory> trajs;
  for (std::size_t a : actions) trajs.push_back({{{0, a, 1.0}}, 1, false});
  auto behavior = std::make_shared<const ExplicitPolicy>(ExplicitPolicy::uniform(2, num_actions));
  return ReplayBuffer(std::move(trajs), {behavior}, 1.0);
}

}  // namespace

TEST(Softmax, ZeroLogitsAreUniform) {
  TabularSoftmaxPolicy p(3, 4);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t a = 0; a < 4; ++a) EXPECT_DOUBLE_EQ(p.prob(s, a), 0.25);
}

TEST(Softmax, MatchesDirectFormula) {
  const Table logits = random_logits(4, 3, 7);
  TabularSoftmaxPolicy p(logits);
  for (std::size_t s = 0; s < 4; ++s) {
    double z = 0.0;
    for (std::size_t a = 0; a < 3; ++a) z += std::exp(logits(s, a));
    for (std::size_t a = 0; a < 3; ++a) {
      EXPECT_NEAR(p.prob(s, a), std::exp(logits(s, a)) / z, 1e-15);
      EXPECT_NEAR(p.log_prob(s, a), logits(s, a) - std::log(z), 1e-13);
    }
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  Table t(1, 3);
  t(0, 0) = 1000.0;
  t(0, 1) = -1000.0;
  TabularSoftmaxPolicy p(t);
  EXPECT_DOUBLE_EQ(p.prob(0, 0), 1.0);
  EXPECT_TRUE(std::isfinite(p.log_prob(0, 1)));
  EXPECT_NEAR(p.log_prob(0, 1), -2000.0, 1e-9);
}

TEST(Softmax, AscendMovesLogits) {
  TabularSoftmaxPolicy p(2, 2);
  Table dir(2, 2);
  dir(1, 0) = 2.0;
  p.ascend(dir, 0.5);
  EXPECT_DOUBLE_EQ(p.logits()(1, 0), 1.0);
  EXPECT_NEAR(p.prob(1, 0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_DOUBLE_EQ(p.prob(0, 0), 0.5);
}

TEST(GradLogProb, MatchesFiniteDifference) {
  const Table logits = random_logits(3, 4, 11);
  TabularSoftmaxPolicy p(logits);
  const double h = 1e-6;
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t a = 0; a < 4; ++a) {
      const Table g = grad_log_prob(p, s, a);
      for (std::size_t i = 0; i < logits.size(); ++i) {
        Table lp = logits, lm = logits;
        lp[i] += h;
        lm[i] -= h;
        const double fd = (TabularSoftmaxPolicy(lp).log_prob(s, a) -
                           TabularSoftmaxPolicy(lm).log_prob(s, a)) / (2 * h);
        EXPECT_NEAR(g[i], fd, 1e-8);
      }
    }
  }
}

TEST(GradLogProb, RowSumsToZero) {
  TabularSoftmaxPolicy p(random_logits(2, 5, 3));
  const Table g = grad_log_prob(p, 1, 2);
  double sum = 0.0;
  for (double v : g.row(1)) sum += v;
  EXPECT_NEAR(sum, 0.0, 1e-15);
  for (double v : g.row(0)) EXPECT_EQ(v, 0.0);
}

TEST(ExplicitPolicy, RejectsNonDistribution) {
  Table t(1, 2);
  t(0, 0) = 0.5;
  t(0, 1) = 0.6;
  EXPECT_THROW(ExplicitPolicy{t}, Error);
  t(0, 1) = -0.5;
  t(0, 0) = 1.5;
  EXPECT_THROW(ExplicitPolicy{t}, Error);
}

TEST(ExplicitPolicy, ZeroHasNegInfLog) {
  Table t(1, 2);
  t(0, 0) = 1.0;
  ExplicitPolicy p(t);
  EXPECT_EQ(p.log_prob(0, 1), kNegInf);
  EXPECT_EQ(p.log_prob(0, 0), 0.0);
}

TEST(Ratio, HandComputed) {
  Table t(2, 2, 0.5);
  t(0, 0) = 0.8;
  t(0, 1) = 0.2;
  ExplicitPolicy target(t);
  ExplicitPolicy behavior = ExplicitPolicy::uniform(2, 2);
  Trajectory traj{{{0, 0, 0.0}, {0, 1, 0.0}, {1, 1, 1.0}}, 1, false};
  EXPECT_NEAR(ratio_traj(target, behavior, traj), (0.8 / 0.5) * (0.2 / 0.5) * 1.0, 1e-15);
  EXPECT_NEAR(log_ratio_traj(target, behavior, traj), std::log(1.6) + std::log(0.4), 1e-15);
  EXPECT_DOUBLE_EQ(ratio_traj(behavior, behavior, traj), 1.0);
}

TEST(Ratio, ZeroBehaviorThrows) {
  Table t(1, 2);
  t(0, 0) = 1.0;
  ExplicitPolicy behavior(t);
  Trajectory traj{{{0, 1, 0.0}}, 0, false};
  try {
    ratio_traj(ExplicitPolicy::uniform(1, 2), behavior, traj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroBehaviorProbability);
  }
}

TEST(Zeroing, ZerosRecordedActionsAndRenormalizes) {
  const ReplayBuffer b = bandit_buffer({1, 3, 1}, 5);
  const ExplicitPolicy z = zeroing_policy(b.behavior(0), b);
  EXPECT_EQ(z.prob(0, 1), 0.0);
  EXPECT_EQ(z.prob(0, 3), 0.0);
  for (std::size_t a : {0u, 2u, 4u}) EXPECT_NEAR(z.prob(0, a), 1.0 / 3.0, 1e-15);
  // untouched row unchanged
  EXPECT_DOUBLE_EQ(z.prob(1, 0), 0.2);
}

TEST(Zeroing, AllActionsSampledThrows) {
  const ReplayBuffer b = bandit_buffer({0, 1}, 2);
  try {
    zeroing_policy(b.behavior(0), b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllActionsSampled);
  }
}

TEST(RandomPolicySet, DeterministicUnderSeed) {
  const Mdp mdp = build_chain();
  Rng r1(5), r2(5), r3(6);
  const auto a = random_policy_set(mdp, 4, r1);
  const auto b = random_policy_set(mdp, 4, r2);
  const auto c = random_policy_set(mdp, 4, r3);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(a[k].logits(), b[k].logits());
  EXPECT_NE(a[0].logits(), c[0].logits());
}

TEST(Rng, SubstreamsDiffer) {
  Rng a(1, "buffer", 0), b(1, "algorithm", 0), c(1, "buffer", 1), d(1, "buffer", 0);
  const double x = a.uniform();
  EXPECT_NE(x, b.uniform());
  EXPECT_NE(x, c.uniform());
  EXPECT_EQ(x, d.uniform());
}

TEST(Rng, CategoricalSkipsZeros) {
  Rng rng(3);
  const std::vector<double> w = {0.0, 2.0, 0.0, 1.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 30000; ++i) ++counts[rng.categorical(w)];
  EXPECT_EQ(counts[0], 0);
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[1] / 30000.0, 2.0 / 3.0, 0.015);
}
