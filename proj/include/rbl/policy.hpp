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
#include <limits>
#include <span>
#include <vector>

#include "rbl/random.hpp"

namespace rbl {

class Mdp;
struct Trajectory;
class ReplayBuffer;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Dense (state, action) table of reals. Used for logits, probabilities and
/// gradients with respect to logits.
class Table {
 public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& data() { return data_; }

  /// this += scale * other
  void axpy(double scale, const Table& other);
  double norm() const;
  bool all_finite() const;

  friend bool operator==(const Table&, const Table&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A stationary stochastic policy over a finite state/action space.
class Policy {
 public:
  virtual ~Policy() = default;

  std::size_t num_states() const { return probs_.rows(); }
  std::size_t num_actions() const { return probs_.cols(); }

  double prob(std::size_t s, std::size_t a) const { return probs_(s, a); }
  /// Natural log of prob(s, a); kNegInf for an exact zero.
  double log_prob(std::size_t s, std::size_t a) const { return log_probs_(s, a); }
  std::span<const double> probs(std::size_t s) const { return probs_.row(s); }
  const Table& prob_table() const { return probs_; }

 protected:
  Policy() = default;
  Table probs_;
  Table log_probs_;
};

/// pi(a|s) = softmax(theta[s, .])(a). Probabilities are cached and kept in
/// sync with the logits.
class TabularSoftmaxPolicy final : public Policy {
 public:
  TabularSoftmaxPolicy(std::size_t num_states, std::size_t num_actions);
  explicit TabularSoftmaxPolicy(Table logits);

  static TabularSoftmaxPolicy uniform(std::size_t num_states, std::size_t num_actions) {
    return TabularSoftmaxPolicy(num_states, num_actions);
  }

  const Table& logits() const { return logits_; }
  void set_logits(Table logits);
  /// theta += step * direction
  void ascend(const Table& direction, double step);

 private:
  void refresh();
  Table logits_;
};

/// Probabilities given directly; exact zeros allowed.
class ExplicitPolicy final : public Policy {
 public:
  explicit ExplicitPolicy(Table probs);

  static ExplicitPolicy uniform(std::size_t num_states, std::size_t num_actions);
  /// Value copy of any policy's probability table.
  static ExplicitPolicy snapshot(const Policy& policy);
};

/// d log pi(a|s) / d theta: row s holds 1{a'=a} - pi(a'|s), zero elsewhere.
Table grad_log_prob(const TabularSoftmaxPolicy& policy, std::size_t s, std::size_t a);

/// Sum over the trajectory of grad_log_prob, i.e. the gradient of
/// log p^pi(tau) (the dynamics do not depend on theta).
Table grad_log_traj(const TabularSoftmaxPolicy& policy, const Trajectory& traj);

/// log of prod_i pi(a_i|s_i) / behavior(a_i|s_i). Throws
/// ErrorCode::ZeroBehaviorProbability if behavior is zero on a recorded action.
double log_ratio_traj(const Policy& target, const Policy& behavior, const Trajectory& traj);

/// p^target(tau) / p^behavior(tau), accumulated in log space.
double ratio_traj(const Policy& target, const Policy& behavior, const Trajectory& traj);

/// Behavior with every (state, action) pair recorded in the buffer set to zero
/// and each touched row renormalized over its remaining actions.
ExplicitPolicy zeroing_policy(const ExplicitPolicy& behavior, const ReplayBuffer& buffer);

/// K softmax policies with i.i.d. standard normal logits.
std::vector<TabularSoftmaxPolicy> random_policy_set(const Mdp& mdp, std::size_t count, Rng& rng);

}  // namespace rbl
