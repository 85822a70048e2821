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

#include "rbl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rbl/error.hpp"

namespace rbl {

std::vector<double> importance_weights(const ReplayBuffer& buffer, const Policy& target) {
  std::vector<double> w(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i)
    w[i] = std::exp(buffer.counts(i).log_prob(target) - buffer.behavior_log_prob(i));
  return w;
}

EstimateBreakdown is_estimate(const ReplayBuffer& buffer, const Policy& target) {
  EstimateBreakdown out;
  out.weights = importance_weights(buffer, target);
  out.returns.assign(buffer.returns().begin(), buffer.returns().end());
  double acc = 0.0;
  for (std::size_t i = 0; i < out.weights.size(); ++i) acc += out.weights[i] * out.returns[i];
  out.value = acc / static_cast<double>(buffer.size());
  return out;
}

EstimateBreakdown wis_estimate(const ReplayBuffer& buffer, const Policy& target) {
  EstimateBreakdown out;
  out.weights = importance_weights(buffer, target);
  out.returns.assign(buffer.returns().begin(), buffer.returns().end());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    num += out.weights[i] * out.returns[i];
    den += out.weights[i];
  }
  if (!(den > 0.0)) fail(ErrorCode::AllWeightsZero, "wis_estimate: all importance weights are zero");
  out.value = num / den;
  return out;
}

double epsilon2_loss(const Policy& target, const ReplayBuffer& buffer) {
  double acc = 0.0;
  for (double w : importance_weights(buffer, target)) acc += std::abs(1.0 - w);
  return acc / static_cast<double>(buffer.size());
}

double l_br_loss(const Policy& target, const ReplayBuffer& buffer) {
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const ExplicitPolicy& behavior = buffer.behavior(i);
    for (const Step& st : buffer.trajectory(i).steps) {
      const double pb = behavior.prob(st.state, st.action);
      if (!(pb > 0.0))
        fail(ErrorCode::ZeroBehaviorProbability, "l_br_loss: zero behavior probability");
      acc += std::abs(target.prob(st.state, st.action) / pb - 1.0);
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : acc / static_cast<double>(pairs);
}

double kl_trajectory_exact(const Mdp& mdp, const Policy& target, const Policy& behavior,
                           std::size_t max_len, std::size_t cap) {
  double kl = 0.0;
  bool infinite = false;
  enumerate_trajectories(
      mdp, target, max_len,
      [&](const Trajectory& t, double p) {
        if (infinite || p <= 0.0) return;
        double log_ratio = 0.0;
        for (const Step& st : t.steps) {
          const double lb = behavior.log_prob(st.state, st.action);
          if (lb == kNegInf) {
            infinite = true;
            return;
          }
          log_ratio += target.log_prob(st.state, st.action) - lb;
        }
        kl += p * log_ratio;
      },
      cap);
  if (infinite) return std::numeric_limits<double>::infinity();
  return std::max(kl, 0.0);
}

McEstimate kl_trajectory_mc(const Mdp& mdp, const Policy& target, const Policy& behavior,
                            std::size_t n_samples, Rng& rng) {
  require(n_samples >= 2, "kl_trajectory_mc: needs at least 2 samples");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    const Trajectory t = sample_trajectory(mdp, target, rng);
    double lr = 0.0;
    for (const Step& st : t.steps) {
      const double lb = behavior.log_prob(st.state, st.action);
      if (lb == kNegInf) return {std::numeric_limits<double>::infinity(), 0.0};
      lr += target.log_prob(st.state, st.action) - lb;
    }
    sum += lr;
    sum_sq += lr * lr;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double reuse_error_bound(const BoundInputs& in) {
  require(in.m >= 2, "reuse_error_bound: m must be >= 2");
  require(in.delta > 0.0 && in.delta < 1.0, "reuse_error_bound: delta must lie in (0, 1)");
  require(in.eps1 >= 0.0 && in.eps2 >= 0.0, "reuse_error_bound: eps1 and eps2 must be >= 0");
  const double m = static_cast<double>(in.m);
  return std::sqrt((m * in.eps1 + std::log(m * m / in.delta)) / (m - 1.0)) + in.eps2;
}

double finite_hypothesis_bound(std::size_t m, std::size_t h_size, double delta, double rho_max) {
  require(m >= 1, "finite_hypothesis_bound: m must be >= 1");
  require(h_size >= 1, "finite_hypothesis_bound: hypothesis count must be >= 1");
  require(delta > 0.0 && delta < 1.0, "finite_hypothesis_bound: delta must lie in (0, 1)");
  require(rho_max >= 1.0, "finite_hypothesis_bound: rho_max must be >= 1");
  return std::sqrt(rho_max * rho_max / (2.0 * static_cast<double>(m)) *
                   std::log(2.0 * static_cast<double>(h_size) / delta));
}

double product_ratio_bound(double eps, std::size_t T) {
  require(eps >= 0.0 && eps < 1.0, "product_ratio_bound: eps must lie in [0, 1)");
  const double t = static_cast<double>(T);
  return std::max(1.0 - std::pow(1.0 - eps, t), std::pow(1.0 + eps, t) - 1.0);
}

double sac_ratio(double log_p_target, double log_p_behavior, double beta_clip) {
  require(beta_clip <= 0.0, "sac_ratio: clip bound must be <= 0");
  return std::exp(log_p_target - std::clamp(log_p_behavior, beta_clip, 0.0));
}

double gaussian_ratio(std::span<const double> action, std::span<const double> mean_target,
                      std::span<const double> mean_behavior, double scale) {
  require(action.size() == mean_target.size() && action.size() == mean_behavior.size(),
          "gaussian_ratio: dimension mismatch");
  require(scale > 0.0, "gaussian_ratio: scale must be > 0");
  double to_behavior = 0.0, to_target = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) {
    const double db = action[i] - mean_behavior[i];
    const double dt = action[i] - mean_target[i];
    to_behavior += db * db;
    to_target += dt * dt;
  }
  return std::exp(0.5 * (to_behavior - to_target) / (scale * scale));
}

}  // namespace rbl
