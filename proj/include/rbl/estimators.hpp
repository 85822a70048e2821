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
#include <span>
#include <vector>

#include "rbl/mdp.hpp"
#include "rbl/policy.hpp"
#include "rbl/random.hpp"

namespace rbl {

struct EstimateBreakdown {
  double value = 0.0;
  std::vector<double> weights;  // w_i = p^target(tau_i) / p^behavior_i(tau_i)
  std::vector<double> returns;  // R(tau_i)
};

struct BoundInputs {
  double eps1 = 0.0;  // KL between trajectory distributions
  double eps2 = 0.0;  // mean |1 - w_i| over the buffer
  std::size_t m = 0;
  double delta = 0.05;
};

/// Importance weights of every buffer trajectory under `target`.
std::vector<double> importance_weights(const ReplayBuffer& buffer, const Policy& target);

/// (1/m) sum_i w_i R(tau_i)
EstimateBreakdown is_estimate(const ReplayBuffer& buffer, const Policy& target);

/// sum_i w_i R(tau_i) / sum_i w_i. Throws ErrorCode::AllWeightsZero.
EstimateBreakdown wis_estimate(const ReplayBuffer& buffer, const Policy& target);

/// L(pi, B) = mean over the buffer of |1 - w_i|.
double epsilon2_loss(const Policy& target, const ReplayBuffer& buffer);

/// Mean over every recorded (s, a) of |pi(a|s) / behavior(a|s) - 1|.
double l_br_loss(const Policy& target, const ReplayBuffer& buffer);

/// KL(p^target || p^behavior) over trajectories, by enumeration. +infinity if
/// target puts mass where behavior does not.
double kl_trajectory_exact(const Mdp& mdp, const Policy& target, const Policy& behavior,
                           std::size_t max_len, std::size_t cap = kDefaultEnumerationCap);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// KL from fresh rollouts of `target`: mean of the log trajectory ratio.
McEstimate kl_trajectory_mc(const Mdp& mdp, const Policy& target, const Policy& behavior,
                            std::size_t n_samples, Rng& rng);

/// sqrt((m eps1 + log(m^2/delta)) / (m - 1)) + eps2
double reuse_error_bound(const BoundInputs& inputs);

/// sqrt(rho_max^2 / (2m) * ln(2 |H| / delta))
double finite_hypothesis_bound(std::size_t m, std::size_t h_size, double delta, double rho_max);

/// max(1 - (1-eps)^T, (1+eps)^T - 1): the worst deviation from 1 of a product
/// of T per-step ratios each within [1-eps, 1+eps].
double product_ratio_bound(double eps, std::size_t T);

/// exp(log_p_target - clamp(log_p_behavior, beta_clip, 0))
double sac_ratio(double log_p_target, double log_p_behavior, double beta_clip);

/// Density ratio of N(mean_target, scale^2 I) to N(mean_behavior, scale^2 I)
/// at `action`.
double gaussian_ratio(std::span<const double> action, std::span<const double> mean_target,
                      std::span<const double> mean_behavior, double scale = 1.0);

}  // namespace rbl
