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

#include "rbl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbl/error.hpp"
#include "rbl/mdp.hpp"

namespace rbl {

void Table::axpy(double scale, const Table& other) {
  require(other.rows_ == rows_ && other.cols_ == cols_, "Table::axpy: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

double Table::norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc);
}

bool Table::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(std::size_t num_states, std::size_t num_actions)
    : TabularSoftmaxPolicy(Table(num_states, num_actions, 0.0)) {}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(Table logits) : logits_(std::move(logits)) {
  require(logits_.rows() > 0 && logits_.cols() > 0, "TabularSoftmaxPolicy: empty logits");
  refresh();
}

void TabularSoftmaxPolicy::set_logits(Table logits) {
  require(logits.rows() == logits_.rows() && logits.cols() == logits_.cols(),
          "TabularSoftmaxPolicy::set_logits: shape mismatch");
  logits_ = std::move(logits);
  refresh();
}

void TabularSoftmaxPolicy::ascend(const Table& direction, double step) {
  logits_.axpy(step, direction);
  refresh();
}

void TabularSoftmaxPolicy::refresh() {
  require(logits_.all_finite(), "TabularSoftmaxPolicy: non-finite logits");
  const std::size_t S = logits_.rows();
  const std::size_t A = logits_.cols();
  probs_ = Table(S, A);
  log_probs_ = Table(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    const auto row = logits_.row(s);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t a = 0; a < A; ++a) {
      log_probs_(s, a) = row[a] - lse;
      probs_(s, a) = std::exp(log_probs_(s, a));
    }
  }
}

ExplicitPolicy::ExplicitPolicy(Table probs) {
  require(probs.rows() > 0 && probs.cols() > 0, "ExplicitPolicy: empty table");
  log_probs_ = Table(probs.rows(), probs.cols());
  for (std::size_t s = 0; s < probs.rows(); ++s) {
    double sum = 0.0;
    for (std::size_t a = 0; a < probs.cols(); ++a) {
      const double p = probs(s, a);
      require(p >= 0.0 && std::isfinite(p), "ExplicitPolicy: probabilities must be finite and >= 0");
      sum += p;
      log_probs_(s, a) = p > 0.0 ? std::log(p) : kNegInf;
    }
    require(std::abs(sum - 1.0) <= 1e-12,
            "ExplicitPolicy: row " + std::to_string(s) + " does not sum to 1");
  }
  probs_ = std::move(probs);
}

ExplicitPolicy ExplicitPolicy::uniform(std::size_t num_states, std::size_t num_actions) {
  return ExplicitPolicy(Table(num_states, num_actions, 1.0 / static_cast<double>(num_actions)));
}

ExplicitPolicy ExplicitPolicy::snapshot(const Policy& policy) {
  return ExplicitPolicy(policy.prob_table());
}

Table grad_log_prob(const TabularSoftmaxPolicy& policy, std::size_t s, std::size_t a) {
  require(s < policy.num_states() && a < policy.num_actions(), "grad_log_prob: index out of range");
  Table g(policy.num_states(), policy.num_actions());
  for (std::size_t b = 0; b < policy.num_actions(); ++b)
    g(s, b) = (b == a ? 1.0 : 0.0) - policy.prob(s, b);
  return g;
}

Table grad_log_traj(const TabularSoftmaxPolicy& policy, const Trajectory& traj) {
  Table g(policy.num_states(), policy.num_actions());
  VisitCounts::of(traj).add_score(policy, 1.0, g);
  return g;
}

double log_ratio_traj(const Policy& target, const Policy& behavior, const Trajectory& traj) {
  double acc = 0.0;
  for (const Step& st : traj.steps) {
    const double lb = behavior.log_prob(st.state, st.action);
    if (lb == kNegInf) {
      fail(ErrorCode::ZeroBehaviorProbability,
           "behavior policy has zero probability for recorded action " + std::to_string(st.action) +
               " in state " + std::to_string(st.state));
    }
    acc += target.log_prob(st.state, st.action) - lb;
  }
  return acc;
}

double ratio_traj(const Policy& target, const Policy& behavior, const Trajectory& traj) {
  return std::exp(log_ratio_traj(target, behavior, traj));
}

ExplicitPolicy zeroing_policy(const ExplicitPolicy& behavior, const ReplayBuffer& buffer) {
  Table probs = behavior.prob_table();
  std::vector<bool> touched(probs.rows(), false);
  for (const Trajectory& traj : buffer.trajectories()) {
    for (const Step& st : traj.steps) {
      probs(st.state, st.action) = 0.0;
      touched[st.state] = true;
    }
  }
  for (std::size_t s = 0; s < probs.rows(); ++s) {
    if (!touched[s]) continue;
    double rest = 0.0;
    for (double p : probs.row(s)) rest += p;
    if (rest <= 0.0) {
      fail(ErrorCode::AllActionsSampled,
           "zeroing_policy: buffer covers every action of state " + std::to_string(s));
    }
    for (std::size_t a = 0; a < probs.cols(); ++a) probs(s, a) /= rest;
  }
  return ExplicitPolicy(std::move(probs));
}

std::vector<TabularSoftmaxPolicy> random_policy_set(const Mdp& mdp, std::size_t count, Rng& rng) {
  require(count >= 1, "random_policy_set: count must be >= 1");
  std::vector<TabularSoftmaxPolicy> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Table logits(mdp.num_states(), mdp.num_actions());
    for (auto& v : logits.data()) v = rng.normal();
    out.emplace_back(std::move(logits));
  }
  return out;
}

}  // namespace rbl
