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
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "rbl/policy.hpp"
#include "rbl/random.hpp"

namespace rbl {

struct Outcome {
  std::size_t next_state;
  double prob;
};

/// Finite tabular MDP with a horizon cap. Immutable after construction.
class Mdp {
 public:
  /// `transitions` is indexed by state * num_actions + action. Rows for
  /// terminal states are never used but must still be distributions.
  Mdp(std::size_t num_states, std::size_t num_actions,
      std::vector<std::vector<Outcome>> transitions, Table reward, double gamma,
      std::vector<double> initial_dist, std::vector<bool> terminal,
      std::size_t horizon_cap);

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  std::size_t horizon_cap() const { return horizon_cap_; }

  std::span<const Outcome> outcomes(std::size_t s, std::size_t a) const {
    return transitions_[s * num_actions_ + a];
  }
  double transition_prob(std::size_t s, std::size_t a, std::size_t next) const;
  double reward(std::size_t s, std::size_t a) const { return reward_(s, a); }
  const Table& reward_table() const { return reward_; }
  std::span<const double> initial_dist() const { return initial_; }
  bool is_terminal(std::size_t s) const { return terminal_[s]; }

  /// Largest and smallest discounted return achievable within the horizon.
  std::pair<double, double> return_range() const;

 private:
  std::size_t num_states_;
  std::size_t num_actions_;
  std::vector<std::vector<Outcome>> transitions_;
  Table reward_;
  double gamma_;
  std::vector<double> initial_;
  std::vector<bool> terminal_;
  std::size_t horizon_cap_;
};

struct Step {
  std::size_t state;
  std::size_t action;
  double reward;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::vector<Step> steps;
  /// State reached after the last step (the start state if `steps` is empty).
  std::size_t final_state = 0;
  /// Set when the horizon cap stopped the rollout in a non-terminal state.
  bool truncated = false;

  std::size_t size() const { return steps.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Per-trajectory sufficient statistics for policy-dependent quantities.
struct VisitCounts {
  struct Pair {
    std::size_t state;
    std::size_t action;
    double count;
  };
  struct State {
    std::size_t state;
    double count;
  };
  std::vector<Pair> pairs;    // sorted by (state, action)
  std::vector<State> states;  // sorted by state

  static VisitCounts of(const Trajectory& traj);
  /// sum_(s,a) count * log pi(a|s)
  double log_prob(const Policy& policy) const;
  /// gradient of log_prob with respect to softmax logits, added into `out`
  /// scaled by `scale`.
  void add_score(const Policy& policy, double scale, Table& out) const;
};

/// m trajectories plus the behavior snapshot that generated each one.
class ReplayBuffer {
 public:
  /// `behavior` holds either one shared snapshot or one per trajectory.
  ReplayBuffer(std::vector<Trajectory> trajectories,
               std::vector<std::shared_ptr<const ExplicitPolicy>> behavior, double gamma);

  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& trajectory(std::size_t i) const { return trajectories_[i]; }
  std::span<const Trajectory> trajectories() const { return trajectories_; }
  const ExplicitPolicy& behavior(std::size_t i) const {
    return *behavior_[shared_behavior() ? 0 : i];
  }
  bool shared_behavior() const { return behavior_.size() == 1; }
  double gamma() const { return gamma_; }

  double trajectory_return(std::size_t i) const { return returns_[i]; }
  std::span<const double> returns() const { return returns_; }
  /// sum of log behavior(a|s) along trajectory i (dynamics excluded)
  double behavior_log_prob(std::size_t i) const { return behavior_log_prob_[i]; }
  const VisitCounts& counts(std::size_t i) const { return counts_[i]; }

  /// Same behavior snapshots with trajectory i replaced.
  ReplayBuffer with_replaced(std::size_t i, Trajectory replacement) const;

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<std::shared_ptr<const ExplicitPolicy>> behavior_;
  double gamma_;
  std::vector<double> returns_;
  std::vector<double> behavior_log_prob_;
  std::vector<VisitCounts> counts_;
};

Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, Rng& rng);

/// m i.i.d. rollouts of one behavior policy, stored with a shared snapshot.
ReplayBuffer sample_buffer(const Mdp& mdp, const Policy& behavior, std::size_t m, Rng& rng);

double discounted_return(const Trajectory& traj, double gamma);

/// J(pi) by finite-horizon backward induction over the horizon cap.
double exact_return(const Mdp& mdp, const Policy& policy);

/// log mu(s_0) + sum_i [log pi(a_i|s_i) + log P(s_(i+1)|s_i,a_i)]; kNegInf
/// when any factor is zero.
double trajectory_log_prob(const Mdp& mdp, const Policy& policy, const Trajectory& traj);
double trajectory_prob(const Mdp& mdp, const Policy& policy, const Trajectory& traj);

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

/// Visits every trajectory of positive probability under `policy` that ends in
/// a terminal state or at `max_len` steps, exactly once. Throws
/// ErrorCode::EnumerationCapExceeded past `cap` trajectories.
void enumerate_trajectories(const Mdp& mdp, const Policy& policy, std::size_t max_len,
                            const std::function<void(const Trajectory&, double prob)>& visit,
                            std::size_t cap = kDefaultEnumerationCap);

struct WeightedTrajectory {
  Trajectory trajectory;
  double prob;
};
std::vector<WeightedTrajectory> collect_trajectories(const Mdp& mdp, const Policy& policy,
                                                     std::size_t max_len,
                                                     std::size_t cap = kDefaultEnumerationCap);

// Builders ------------------------------------------------------------------

/// n x n grid, actions up/right/down/left, goal (terminal) in the far corner,
/// reward 1 on entering the goal. gamma 0.95, horizon 4 n^2.
Mdp build_gridworld(std::size_t n, bool random_start);

/// Deterministic chain 0..n-1 starting at 0 with the goal (terminal) at n-1.
/// Action 0 moves left (clamped at 0), action 1 moves right. Reward 1 on
/// entering the goal.
Mdp build_chain(std::size_t num_states = 3, double gamma = 0.9, std::size_t horizon_cap = 4);

/// One decision state, one terminal successor per action, given rewards.
Mdp build_bandit(std::vector<double> rewards);

struct Theorem3Construction {
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t x = 0;
  std::int64_t m1 = 0;  // reward-1 actions
  std::int64_t m2 = 0;  // reward-0 actions
  double p = 0.0;       // m2 / (m1 + m2)
  std::size_t n = 0;    // buffer size
  double target_overestimate = 0.0;
  double eps = 0.0;

  double expected_true_return() const;       // 1 - p^(n+1)
  double expected_estimated_return() const;  // (1 - p^n) (m1 + m2) / n
};

/// Smallest (b, a, x) in lexicographic order satisfying the construction's
/// inequalities, together with the one-decision environment it defines.
std::pair<Mdp, Theorem3Construction> build_theorem3_env(std::size_t n, double M, double eps);

/// One decision state, num_actions actions all with reward 1, terminal after.
Mdp build_zeroing_env(std::size_t num_actions);

}  // namespace rbl
