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

#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"
#include "rbl/mdp.hpp"
#include "rbl/policy.hpp"
#include "rbl/random.hpp"

namespace rbl {

enum class Objective { IS, WIS };
enum class LrSchedule { Constant, InverseDecay };

std::string_view to_string(Objective objective);
std::string_view to_string(LrSchedule schedule);

struct OptimConfig {
  double learning_rate = 1e-2;
  std::size_t steps = 500;
  /// Weight of the buffer ratio penalty L(pi, B). Distinct from the step size.
  double biris_alpha = 0.05;
  Objective objective = Objective::IS;
  LrSchedule lr_schedule = LrSchedule::Constant;

  /// Step size at 0-based iteration k.
  double step_size(std::size_t k) const;
};

struct TraceRecord {
  double j_hat;
  double penalty;  // L(pi, B)
  double grad_norm;
};
using TrainTrace = std::vector<TraceRecord>;

/// Gradient of is_estimate with respect to the logits.
Table grad_is_objective(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy);

/// Gradient of wis_estimate with respect to the logits.
Table grad_wis_objective(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy);

/// Subgradient of L(pi, B); zero contribution from trajectories with w == 1.
Table grad_biris_penalty(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy);

/// Full-batch ascent on objective - biris_alpha * L(pi, B).
std::pair<TabularSoftmaxPolicy, TrainTrace> train_pg(const ReplayBuffer& buffer,
                                                      const TabularSoftmaxPolicy& init,
                                                      const OptimConfig& config);

/// Single-trajectory updates theta += a_k w(tau) R(tau) grad log p(tau), tau
/// drawn uniformly from the buffer at every epoch. The trace records the
/// state before each update.
std::pair<TabularSoftmaxPolicy, TrainTrace> train_stochastic_pg(
    const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init, const OptimConfig& config,
    Rng& rng);

/// Observer called with the parameters before each stochastic update and once
/// after the last one.
using ThetaObserver = std::function<void(std::size_t epoch, const TabularSoftmaxPolicy&)>;
std::pair<TabularSoftmaxPolicy, TrainTrace> train_stochastic_pg(
    const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init, const OptimConfig& config,
    Rng& rng, const ThetaObserver& observer);

TabularSoftmaxPolicy one_step_pg(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init,
                                 double learning_rate);

/// Hypothesis with the largest IS estimate on the buffer; ties go to the lowest
/// index.
template <class P>
std::pair<const P*, std::size_t> argmax_over_hypotheses(const ReplayBuffer& buffer,
                                                        const std::vector<P>& hypotheses);

enum class GradientTarget { IS, WIS, BirisPenalty };
std::string_view to_string(GradientTarget target);

/// Max over `coords` randomly chosen logit coordinates of
/// |analytic - central difference| / (|analytic| + 1e-12).
double finite_diff_check(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy,
                         GradientTarget target, double h, Rng& rng, std::size_t coords = 16);

/// Objective value matching a GradientTarget (is, wis, or penalty).
double objective_value(const ReplayBuffer& buffer, const Policy& policy, GradientTarget target);
Table objective_gradient(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy,
                         GradientTarget target);

template <class P>
std::pair<const P*, std::size_t> argmax_over_hypotheses(const ReplayBuffer& buffer,
                                                        const std::vector<P>& hypotheses) {
  require(!hypotheses.empty(), "argmax_over_hypotheses: empty hypothesis list");
  std::size_t best = 0;
  double best_value = is_estimate(buffer, hypotheses[0]).value;
  for (std::size_t k = 1; k < hypotheses.size(); ++k) {
    const double v = is_estimate(buffer, hypotheses[k]).value;
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  return {&hypotheses[best], best};
}

}  // namespace rbl
