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
#include <functional>

#include <gtest/gtest.h>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"
#include "rbl/optim.hpp"

using namespace rbl;

namespace {

Table random_logits(std::size_t S, std::size_t A, Rng& rng, double scale = 1.0) {
  Table t(S, A);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

// Central differences over every coordinate of a scalar function of logits.
Table numeric_gradient(const std::function<double(const TabularSoftmaxPolicy&)>& f,
                       const Table& logits, double h) {
  Table g(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Table p = logits, m = logits;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(TabularSoftmaxPolicy(p)) - f(TabularSoftmaxPolicy(m))) / (2 * h);
  }
  return g;
}

double penalty(const ReplayBuffer& b, const Policy& p) { return epsilon2_loss(p, b); }

}  // namespace

TEST(Gradients, MatchCentralDifferences) {
  const Mdp mdps[] = {build_chain(), build_gridworld(3, false), build_bandit({1.0, 0.3, 0.0})};
  int penalty_checked = 0;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Mdp& mdp = mdps[seed % 3];
    Rng rng(seed);
    const ReplayBuffer b = sample_buffer(mdp, TabularSoftmaxPolicy(mdp.num_states(), mdp.num_actions()), 8, rng);
    const Table logits = random_logits(mdp.num_states(), mdp.num_actions(), rng, 0.5);
    const TabularSoftmaxPolicy pi(logits);
    const Table gi = grad_is_objective(b, pi);
    const Table gw = grad_wis_objective(b, pi);
    const Table ni = numeric_gradient([&](const auto& p) { return is_estimate(b, p).value; }, logits, 1e-6);
    const Table nw = numeric_gradient([&](const auto& p) { return wis_estimate(b, p).value; }, logits, 1e-6);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      EXPECT_NEAR(gi[i], ni[i], 1e-8 + 1e-6 * std::abs(ni[i]));
      EXPECT_NEAR(gw[i], nw[i], 1e-8 + 1e-6 * std::abs(nw[i]));
    }
    const auto w = importance_weights(b, pi);
    if (std::all_of(w.begin(), w.end(), [](double x) { return std::abs(1 - x) > 0.1; })) {
      ++penalty_checked;
      const Table gp = grad_biris_penalty(b, pi);
      const Table np = numeric_gradient([&](const auto& p) { return penalty(b, p); }, logits, 1e-6);
      for (std::size_t i = 0; i < logits.size(); ++i)
        EXPECT_NEAR(gp[i], np[i], 1e-8 + 1e-6 * std::abs(np[i]));
    }
  }
  EXPECT_GT(penalty_checked, 0);
}

TEST(Gradients, PenaltySubgradientZeroAtBehavior) {
  const Mdp c = build_chain();
  Rng rng(3);
  const TabularSoftmaxPolicy beh(3, 2);
  const ReplayBuffer b = sample_buffer(c, beh, 10, rng);
  const Table g = grad_biris_penalty(b, beh);
  EXPECT_EQ(g.norm(), 0.0);
}

TEST(FiniteDiffCheck, ZeroReturnBufferGivesZero) {
  const Mdp m = build_bandit({0.0, 0.0});
  Rng rng(1);
  const ReplayBuffer b = sample_buffer(m, TabularSoftmaxPolicy(m.num_states(), 2), 5, rng);
  Rng r2(2);
  const TabularSoftmaxPolicy pi(random_logits(m.num_states(), 2, r2));
  EXPECT_EQ(finite_diff_check(b, pi, GradientTarget::IS, 1e-5, rng), 0.0);
}

TEST(FiniteDiffCheck, DeterministicUnderSeed) {
  const Mdp c = build_chain();
  Rng rng(4);
  const ReplayBuffer b = sample_buffer(c, TabularSoftmaxPolicy(3, 2), 10, rng);
  const TabularSoftmaxPolicy pi(random_logits(3, 2, rng));
  Rng a(9), bb(9);
  EXPECT_EQ(finite_diff_check(b, pi, GradientTarget::WIS, 1e-5, a, 3),
            finite_diff_check(b, pi, GradientTarget::WIS, 1e-5, bb, 3));
  EXPECT_THROW(finite_diff_check(b, pi, GradientTarget::IS, 0.0, a), Error);
}

TEST(TrainPg, MonotoneAtSmallLearningRate) {
  for (const Mdp& mdp : {build_chain(), build_gridworld(3, false)}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(seed);
      const TabularSoftmaxPolicy init(mdp.num_states(), mdp.num_actions());
      const ReplayBuffer b = sample_buffer(mdp, init, 10, rng);
      for (Objective obj : {Objective::IS, Objective::WIS}) {
        OptimConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.steps = 100;
        cfg.biris_alpha = 0.0;
        cfg.objective = obj;
        const auto [pi, trace] = train_pg(b, init, cfg);
        ASSERT_EQ(trace.size(), 100u);
        for (std::size_t k = 1; k < trace.size(); ++k)
          EXPECT_GE(trace[k].j_hat, trace[k - 1].j_hat - 1e-9);
      }
    }
  }
}

TEST(TrainPg, ZeroStepsReturnsInit) {
  const Mdp c = build_chain();
  Rng rng(0);
  const TabularSoftmaxPolicy init(random_logits(3, 2, rng));
  const ReplayBuffer b = sample_buffer(c, TabularSoftmaxPolicy(3, 2), 5, rng);
  OptimConfig cfg;
  cfg.steps = 0;
  EXPECT_EQ(train_pg(b, init, cfg).first.logits(), init.logits());
  EXPECT_EQ(train_stochastic_pg(b, init, cfg, rng).first.logits(), init.logits());
}

TEST(OneStepPg, EqualsSingleGradientStep) {
  const Mdp g = build_gridworld(3, false);
  Rng rng(5);
  const TabularSoftmaxPolicy init(9, 4);
  const ReplayBuffer b = sample_buffer(g, init, 10, rng);
  const TabularSoftmaxPolicy next = one_step_pg(b, init, 0.01);
  Table expect = init.logits();
  expect.axpy(0.01, grad_is_objective(b, init));
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_DOUBLE_EQ(next.logits()[i], expect[i]);
}

TEST(StochasticPg, UpdateMatchesDefinition) {
  // One epoch on a one-trajectory buffer: theta += lr * w * R * grad log p.
  const Mdp c = build_chain();
  const std::vector<Trajectory> trajs = {{{{0, 1, 0.0}, {1, 1, 1.0}}, 2, false}};
  auto beh = std::make_shared<const ExplicitPolicy>(ExplicitPolicy::uniform(3, 2));
  const ReplayBuffer b(trajs, {beh}, 0.9);
  Rng r0(1);
  const TabularSoftmaxPolicy init(random_logits(3, 2, r0));
  OptimConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.steps = 1;
  Rng rng(2);
  const auto [pi, trace] = train_stochastic_pg(b, init, cfg, rng);
  const double w = ratio_traj(init, *beh, trajs[0]);
  Table expect = init.logits();
  expect.axpy(0.3 * w * 0.9, grad_log_traj(init, trajs[0]));
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(pi.logits()[i], expect[i], 1e-15);
}

TEST(StochasticPg, DeterministicUnderSeed) {
  const Mdp c = build_chain();
  Rng rng(3);
  const TabularSoftmaxPolicy init(3, 2);
  const ReplayBuffer b = sample_buffer(c, init, 10, rng);
  OptimConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.steps = 30;
  Rng a(4), bb(4);
  EXPECT_EQ(train_stochastic_pg(b, init, cfg, a).first.logits(),
            train_stochastic_pg(b, init, cfg, bb).first.logits());
}

TEST(Argmax, PicksLargestEstimateLowestIndexOnTies) {
  const Mdp m = build_bandit({1.0, 0.0});
  std::vector<Trajectory> trajs = {{{{0, 0, 1.0}}, 1, false}};
  auto beh = std::make_shared<const ExplicitPolicy>(ExplicitPolicy::uniform(m.num_states(), 2));
  const ReplayBuffer b(trajs, {beh}, 1.0);
  Table lo(m.num_states(), 2), hi(m.num_states(), 2);
  hi(0, 0) = 2.0;
  const std::vector<TabularSoftmaxPolicy> hs = {TabularSoftmaxPolicy(lo), TabularSoftmaxPolicy(hi),
                                                TabularSoftmaxPolicy(hi)};
  const auto [best, index] = argmax_over_hypotheses(b, hs);
  EXPECT_EQ(index, 1u);
  EXPECT_EQ(best, &hs[1]);
}

TEST(OptimConfig, InverseDecaySchedule) {
  OptimConfig c;
  c.learning_rate = 0.5;
  EXPECT_EQ(c.step_size(3), 0.5);
  c.lr_schedule = LrSchedule::InverseDecay;
  EXPECT_DOUBLE_EQ(c.step_size(0), 0.5);
  EXPECT_DOUBLE_EQ(c.step_size(3), 0.125);
}
