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

#include "rbl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"

namespace rbl {

std::string_view to_string(Objective objective) {
  return objective == Objective::IS ? "IS" : "WIS";
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::Constant ? "constant" : "inverse";
}

std::string_view to_string(GradientTarget target) {
  switch (target) {
    case GradientTarget::IS: return "is";
    case GradientTarget::WIS: return "wis";
    default: return "biris_penalty";
  }
}

double OptimConfig::step_size(std::size_t k) const {
  return lr_schedule == LrSchedule::Constant ? learning_rate
                                             : learning_rate / static_cast<double>(k + 1);
}

namespace {

// sum_i coef_i * grad log p^pi(tau_i)
Table weighted_score(const ReplayBuffer& buffer, const Policy& policy,
                     const std::vector<double>& coef) {
  Table g(policy.num_states(), policy.num_actions());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (coef[i] == 0.0) continue;
    buffer.counts(i).add_score(policy, coef[i], g);
  }
  return g;
}

std::vector<double> is_coefficients(const ReplayBuffer& buffer, const std::vector<double>& w) {
  const double m = static_cast<double>(buffer.size());
  std::vector<double> coef(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) coef[i] = w[i] * buffer.trajectory_return(i) / m;
  return coef;
}

std::vector<double> wis_coefficients(const ReplayBuffer& buffer, const std::vector<double>& w,
                                     double* value = nullptr) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    num += w[i] * buffer.trajectory_return(i);
    den += w[i];
  }
  if (!(den > 0.0)) fail(ErrorCode::AllWeightsZero, "WIS objective: all importance weights are zero");
  const double j = num / den;
  if (value) *value = j;
  std::vector<double> coef(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) coef[i] = w[i] * (buffer.trajectory_return(i) - j) / den;
  return coef;
}

std::vector<double> penalty_coefficients(const std::vector<double>& w, double* value = nullptr) {
  const double m = static_cast<double>(w.size());
  std::vector<double> coef(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += std::abs(1.0 - w[i]);
    const double sign = w[i] > 1.0 ? 1.0 : (w[i] < 1.0 ? -1.0 : 0.0);
    coef[i] = sign * w[i] / m;
  }
  if (value) *value = acc / m;
  return coef;
}

double is_value(const ReplayBuffer& buffer, const std::vector<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * buffer.trajectory_return(i);
  return acc / static_cast<double>(w.size());
}

}  // namespace

Table grad_is_objective(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy) {
  return weighted_score(buffer, policy, is_coefficients(buffer, importance_weights(buffer, policy)));
}

Table grad_wis_objective(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy) {
  return weighted_score(buffer, policy, wis_coefficients(buffer, importance_weights(buffer, policy)));
}

Table grad_biris_penalty(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy) {
  return weighted_score(buffer, policy, penalty_coefficients(importance_weights(buffer, policy)));
}

std::pair<TabularSoftmaxPolicy, TrainTrace> train_pg(const ReplayBuffer& buffer,
                                                      const TabularSoftmaxPolicy& init,
                                                      const OptimConfig& config) {
  require(config.learning_rate > 0.0, "train_pg: learning rate must be > 0");
  require(config.biris_alpha >= 0.0, "train_pg: biris_alpha must be >= 0");
  TabularSoftmaxPolicy policy = init;
  TrainTrace trace;
  trace.reserve(config.steps);
  for (std::size_t k = 0; k < config.steps; ++k) {
    const std::vector<double> w = importance_weights(buffer, policy);
    double j_hat = 0.0;
    std::vector<double> coef;
    if (config.objective == Objective::IS) {
      j_hat = is_value(buffer, w);
      coef = is_coefficients(buffer, w);
    } else {
      coef = wis_coefficients(buffer, w, &j_hat);
    }
    double penalty = 0.0;
    const std::vector<double> pen = penalty_coefficients(w, &penalty);
    if (config.biris_alpha > 0.0)
      for (std::size_t i = 0; i < coef.size(); ++i) coef[i] -= config.biris_alpha * pen[i];
    const Table grad = weighted_score(buffer, policy, coef);
    const double norm = grad.norm();
    if (!std::isfinite(norm))
      fail(ErrorCode::NonFiniteGradient, "train_pg: non-finite gradient at step " + std::to_string(k));
    trace.push_back({j_hat, penalty, norm});
    policy.ascend(grad, config.step_size(k));
  }
  return {std::move(policy), std::move(trace)};
}

std::pair<TabularSoftmaxPolicy, TrainTrace> train_stochastic_pg(
    const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init, const OptimConfig& config,
    Rng& rng) {
  return train_stochastic_pg(buffer, init, config, rng, nullptr);
}

std::pair<TabularSoftmaxPolicy, TrainTrace> train_stochastic_pg(
    const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init, const OptimConfig& config,
    Rng& rng, const ThetaObserver& observer) {
  require(config.learning_rate > 0.0, "train_stochastic_pg: learning rate must be > 0");
  TabularSoftmaxPolicy policy = init;
  TrainTrace trace;
  trace.reserve(config.steps);
  for (std::size_t k = 0; k < config.steps; ++k) {
    if (observer) observer(k, policy);
    const std::vector<double> w = importance_weights(buffer, policy);
    double penalty = 0.0;
    penalty_coefficients(w, &penalty);
    const std::size_t i = rng.uniform_index(buffer.size());
    Table direction(policy.num_states(), policy.num_actions());
    const double scale = w[i] * buffer.trajectory_return(i);
    if (scale != 0.0) buffer.counts(i).add_score(policy, scale, direction);
    const double norm = direction.norm();
    if (!std::isfinite(norm)) {
      fail(ErrorCode::NonFiniteGradient,
           "train_stochastic_pg: non-finite update at epoch " + std::to_string(k));
    }
    trace.push_back({is_value(buffer, w), penalty, norm});
    if (scale != 0.0) policy.ascend(direction, config.step_size(k));
  }
  if (observer) observer(config.steps, policy);
  return {std::move(policy), std::move(trace)};
}

TabularSoftmaxPolicy one_step_pg(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& init,
                                 double learning_rate) {
  require(learning_rate >= 0.0, "one_step_pg: learning rate must be >= 0");
  TabularSoftmaxPolicy policy = init;
  if (learning_rate > 0.0) policy.ascend(grad_is_objective(buffer, init), learning_rate);
  return policy;
}

double objective_value(const ReplayBuffer& buffer, const Policy& policy, GradientTarget target) {
  switch (target) {
    case GradientTarget::IS: return is_estimate(buffer, policy).value;
    case GradientTarget::WIS: return wis_estimate(buffer, policy).value;
    default: return epsilon2_loss(policy, buffer);
  }
}

Table objective_gradient(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy,
                         GradientTarget target) {
  switch (target) {
    case GradientTarget::IS: return grad_is_objective(buffer, policy);
    case GradientTarget::WIS: return grad_wis_objective(buffer, policy);
    default: return grad_biris_penalty(buffer, policy);
  }
}

double finite_diff_check(const ReplayBuffer& buffer, const TabularSoftmaxPolicy& policy,
                         GradientTarget target, double h, Rng& rng, std::size_t coords) {
  require(h > 0.0, "finite_diff_check: h must be > 0");
  const Table analytic = objective_gradient(buffer, policy, target);
  std::vector<std::size_t> index(analytic.size());
  std::iota(index.begin(), index.end(), 0);
  for (std::size_t k = index.size(); k > 1; --k) std::swap(index[k - 1], index[rng.uniform_index(k)]);
  index.resize(std::min(coords, index.size()));

  double worst = 0.0;
  for (std::size_t idx : index) {
    Table plus = policy.logits(), minus = policy.logits();
    plus[idx] += h;
    minus[idx] -= h;
    const double fp = objective_value(buffer, TabularSoftmaxPolicy(std::move(plus)), target);
    const double fm = objective_value(buffer, TabularSoftmaxPolicy(std::move(minus)), target);
    const double numeric = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[idx] - numeric) / (std::abs(analytic[idx]) + 1e-12));
  }
  return worst;
}

}  // namespace rbl
