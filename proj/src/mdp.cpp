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

#include "rbl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbl/error.hpp"

namespace rbl {

namespace {

constexpr double kNormTol = 1e-12;

// Weighted mean sum_i w_i v_i / sum_i w_i. Dividing by the computed weight
// sum keeps expectations of constants exact despite rounding in the weights.
template <class WeightFn, class ValueFn>
double normalized_expectation(std::size_t n, WeightFn weight, ValueFn value) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weight(i);
    if (w <= 0.0) continue;
    num += w * value(i);
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

Mdp::Mdp(std::size_t num_states, std::size_t num_actions,
         std::vector<std::vector<Outcome>> transitions, Table reward, double gamma,
         std::vector<double> initial_dist, std::vector<bool> terminal, std::size_t horizon_cap)
    : num_states_(num_states),
      num_actions_(num_actions),
      transitions_(std::move(transitions)),
      reward_(std::move(reward)),
      gamma_(gamma),
      initial_(std::move(initial_dist)),
      terminal_(std::move(terminal)),
      horizon_cap_(horizon_cap) {
  require(num_states_ >= 1 && num_actions_ >= 1, "Mdp: empty state or action space");
  require(transitions_.size() == num_states_ * num_actions_, "Mdp: transition table has wrong size");
  require(reward_.rows() == num_states_ && reward_.cols() == num_actions_,
          "Mdp: reward table has wrong shape");
  require(gamma_ > 0.0 && gamma_ <= 1.0, "Mdp: gamma must lie in (0, 1]");
  require(initial_.size() == num_states_, "Mdp: initial distribution has wrong size");
  require(terminal_.size() == num_states_, "Mdp: terminal mask has wrong size");
  require(horizon_cap_ >= 1, "Mdp: horizon cap must be >= 1");
  for (std::size_t row = 0; row < transitions_.size(); ++row) {
    double sum = 0.0;
    for (const Outcome& o : transitions_[row]) {
      require(o.next_state < num_states_, "Mdp: successor index out of range");
      require(o.prob >= 0.0, "Mdp: negative transition probability");
      sum += o.prob;
    }
    require(std::abs(sum - 1.0) <= kNormTol,
            "Mdp: transition row (" + std::to_string(row / num_actions_) + ", " +
                std::to_string(row % num_actions_) + ") does not sum to 1");
  }
  double init_sum = 0.0;
  for (double p : initial_) {
    require(p >= 0.0, "Mdp: negative initial probability");
    init_sum += p;
  }
  require(std::abs(init_sum - 1.0) <= kNormTol, "Mdp: initial distribution does not sum to 1");
  require(reward_.all_finite(), "Mdp: non-finite reward");
  const auto [lo, hi] = return_range();
  require(lo >= -kNormTol && hi <= 1.0 + kNormTol,
          "Mdp: achievable discounted returns must lie in [0, 1]");
}

double Mdp::transition_prob(std::size_t s, std::size_t a, std::size_t next) const {
  double p = 0.0;
  for (const Outcome& o : outcomes(s, a))
    if (o.next_state == next) p += o.prob;
  return p;
}

std::pair<double, double> Mdp::return_range() const {
  std::vector<double> lo(num_states_, 0.0), hi(num_states_, 0.0);
  std::vector<double> lo_next(num_states_, 0.0), hi_next(num_states_, 0.0);
  for (std::size_t t = horizon_cap_; t-- > 0;) {
    lo_next.swap(lo);
    hi_next.swap(hi);
    for (std::size_t s = 0; s < num_states_; ++s) {
      if (terminal_[s]) {
        lo[s] = hi[s] = 0.0;
        continue;
      }
      double best = -INFINITY, worst = INFINITY;
      for (std::size_t a = 0; a < num_actions_; ++a) {
        double up = -INFINITY, down = INFINITY;
        for (const Outcome& o : outcomes(s, a)) {
          if (o.prob <= 0.0) continue;
          up = std::max(up, hi_next[o.next_state]);
          down = std::min(down, lo_next[o.next_state]);
        }
        best = std::max(best, reward_(s, a) + gamma_ * up);
        worst = std::min(worst, reward_(s, a) + gamma_ * down);
      }
      hi[s] = best;
      lo[s] = worst;
    }
  }
  double rlo = INFINITY, rhi = -INFINITY;
  for (std::size_t s = 0; s < num_states_; ++s) {
    if (initial_[s] <= 0.0) continue;
    rlo = std::min(rlo, lo[s]);
    rhi = std::max(rhi, hi[s]);
  }
  return {rlo, rhi};
}

VisitCounts VisitCounts::of(const Trajectory& traj) {
  std::vector<std::pair<std::size_t, std::size_t>> sa;
  sa.reserve(traj.steps.size());
  for (const Step& st : traj.steps) sa.emplace_back(st.state, st.action);
  std::sort(sa.begin(), sa.end());
  VisitCounts out;
  for (const auto& [s, a] : sa) {
    if (!out.pairs.empty() && out.pairs.back().state == s && out.pairs.back().action == a) {
      out.pairs.back().count += 1.0;
    } else {
      out.pairs.push_back({s, a, 1.0});
    }
    if (!out.states.empty() && out.states.back().state == s) {
      out.states.back().count += 1.0;
    } else {
      out.states.push_back({s, 1.0});
    }
  }
  return out;
}

double VisitCounts::log_prob(const Policy& policy) const {
  double acc = 0.0;
  for (const Pair& p : pairs) acc += p.count * policy.log_prob(p.state, p.action);
  return acc;
}

void VisitCounts::add_score(const Policy& policy, double scale, Table& out) const {
  for (const Pair& p : pairs) out(p.state, p.action) += scale * p.count;
  const std::size_t A = policy.num_actions();
  for (const State& st : states) {
    const double c = scale * st.count;
    const auto probs = policy.probs(st.state);
    for (std::size_t b = 0; b < A; ++b) out(st.state, b) -= c * probs[b];
  }
}

ReplayBuffer::ReplayBuffer(std::vector<Trajectory> trajectories,
                           std::vector<std::shared_ptr<const ExplicitPolicy>> behavior,
                           double gamma)
    : trajectories_(std::move(trajectories)), behavior_(std::move(behavior)), gamma_(gamma) {
  require(!trajectories_.empty(), "ReplayBuffer: needs at least one trajectory");
  require(behavior_.size() == 1 || behavior_.size() == trajectories_.size(),
          "ReplayBuffer: behavior snapshots must be shared or one per trajectory");
  for (const auto& b : behavior_) require(b != nullptr, "ReplayBuffer: null behavior snapshot");
  const std::size_t m = trajectories_.size();
  returns_.resize(m);
  behavior_log_prob_.resize(m);
  counts_.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    returns_[i] = discounted_return(trajectories_[i], gamma_);
    counts_.push_back(VisitCounts::of(trajectories_[i]));
    const double lp = counts_[i].log_prob(this->behavior(i));
    if (lp == kNegInf) {
      fail(ErrorCode::ZeroBehaviorProbability,
           "ReplayBuffer: trajectory " + std::to_string(i) +
               " records an action its behavior policy cannot take");
    }
    behavior_log_prob_[i] = lp;
  }
}

ReplayBuffer ReplayBuffer::with_replaced(std::size_t i, Trajectory replacement) const {
  require(i < size(), "ReplayBuffer::with_replaced: index out of range");
  std::vector<Trajectory> trajs = trajectories_;
  trajs[i] = std::move(replacement);
  return ReplayBuffer(std::move(trajs), behavior_, gamma_);
}

Trajectory sample_trajectory(const Mdp& mdp, const Policy& policy, Rng& rng) {
  require(policy.num_states() == mdp.num_states() && policy.num_actions() == mdp.num_actions(),
          "sample_trajectory: policy shape does not match the MDP");
  Trajectory traj;
  std::size_t s = rng.categorical(mdp.initial_dist());
  std::vector<double> weights;
  while (!mdp.is_terminal(s) && traj.steps.size() < mdp.horizon_cap()) {
    const std::size_t a = rng.categorical(policy.probs(s));
    traj.steps.push_back({s, a, mdp.reward(s, a)});
    const auto outs = mdp.outcomes(s, a);
    if (outs.size() == 1) {
      s = outs[0].next_state;
    } else {
      weights.resize(outs.size());
      for (std::size_t k = 0; k < outs.size(); ++k) weights[k] = outs[k].prob;
      s = outs[rng.categorical(weights)].next_state;
    }
  }
  traj.final_state = s;
  traj.truncated = !mdp.is_terminal(s);
  return traj;
}

ReplayBuffer sample_buffer(const Mdp& mdp, const Policy& behavior, std::size_t m, Rng& rng) {
  require(m >= 1, "sample_buffer: m must be >= 1");
  std::vector<Trajectory> trajs;
  trajs.reserve(m);
  for (std::size_t i = 0; i < m; ++i) trajs.push_back(sample_trajectory(mdp, behavior, rng));
  auto snap = std::make_shared<const ExplicitPolicy>(ExplicitPolicy::snapshot(behavior));
  return ReplayBuffer(std::move(trajs), {std::move(snap)}, mdp.gamma());
}

double discounted_return(const Trajectory& traj, double gamma) {
  double acc = 0.0;
  double disc = 1.0;
  for (const Step& st : traj.steps) {
    acc += disc * st.reward;
    disc *= gamma;
  }
  return acc;
}

double exact_return(const Mdp& mdp, const Policy& policy) {
  require(policy.num_states() == mdp.num_states() && policy.num_actions() == mdp.num_actions(),
          "exact_return: policy shape does not match the MDP");
  const std::size_t S = mdp.num_states();
  const std::size_t A = mdp.num_actions();
  std::vector<double> value(S, 0.0), next(S, 0.0);
  for (std::size_t t = mdp.horizon_cap(); t-- > 0;) {
    value.swap(next);
    for (std::size_t s = 0; s < S; ++s) {
      if (mdp.is_terminal(s)) {
        value[s] = 0.0;
        continue;
      }
      const auto probs = policy.probs(s);
      value[s] = normalized_expectation(
          A, [&](std::size_t a) { return probs[a]; },
          [&](std::size_t a) {
            const auto outs = mdp.outcomes(s, a);
            const double cont = normalized_expectation(
                outs.size(), [&](std::size_t k) { return outs[k].prob; },
                [&](std::size_t k) { return next[outs[k].next_state]; });
            return mdp.reward(s, a) + mdp.gamma() * cont;
          });
    }
  }
  const auto mu = mdp.initial_dist();
  return normalized_expectation(
      S, [&](std::size_t s) { return mu[s]; }, [&](std::size_t s) { return value[s]; });
}

double trajectory_log_prob(const Mdp& mdp, const Policy& policy, const Trajectory& traj) {
  const std::size_t s0 = traj.steps.empty() ? traj.final_state : traj.steps.front().state;
  const double mu = mdp.initial_dist()[s0];
  if (mu <= 0.0) return kNegInf;
  double acc = std::log(mu);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const Step& st = traj.steps[i];
    const std::size_t next = i + 1 < traj.steps.size() ? traj.steps[i + 1].state : traj.final_state;
    const double p = mdp.transition_prob(st.state, st.action, next);
    const double lp = policy.log_prob(st.state, st.action);
    if (p <= 0.0 || lp == kNegInf) return kNegInf;
    acc += lp + std::log(p);
  }
  return acc;
}

double trajectory_prob(const Mdp& mdp, const Policy& policy, const Trajectory& traj) {
  return std::exp(trajectory_log_prob(mdp, policy, traj));
}

namespace {

struct Enumerator {
  const Mdp& mdp;
  const Policy& policy;
  std::size_t max_len;
  std::size_t cap;
  const std::function<void(const Trajectory&, double)>& visit;
  std::size_t emitted = 0;
  Trajectory current;

  void emit(std::size_t s, double prob, bool truncated) {
    if (++emitted > cap) {
      fail(ErrorCode::EnumerationCapExceeded,
           "enumerate_trajectories: more than " + std::to_string(cap) + " trajectories");
    }
    current.final_state = s;
    current.truncated = truncated;
    visit(current, prob);
  }

  void expand(std::size_t s, double prob) {
    if (mdp.is_terminal(s)) return emit(s, prob, false);
    if (current.steps.size() == max_len) return emit(s, prob, true);
    for (std::size_t a = 0; a < mdp.num_actions(); ++a) {
      const double pa = policy.prob(s, a);
      if (pa <= 0.0) continue;
      current.steps.push_back({s, a, mdp.reward(s, a)});
      for (const Outcome& o : mdp.outcomes(s, a)) {
        if (o.prob <= 0.0) continue;
        expand(o.next_state, prob * pa * o.prob);
      }
      current.steps.pop_back();
    }
  }
};

}  // namespace

void enumerate_trajectories(const Mdp& mdp, const Policy& policy, std::size_t max_len,
                            const std::function<void(const Trajectory&, double prob)>& visit,
                            std::size_t cap) {
  require(policy.num_states() == mdp.num_states() && policy.num_actions() == mdp.num_actions(),
          "enumerate_trajectories: policy shape does not match the MDP");
  Enumerator e{mdp, policy, max_len, cap, visit, 0, {}};
  const auto mu = mdp.initial_dist();
  for (std::size_t s = 0; s < mdp.num_states(); ++s) {
    if (mu[s] > 0.0) e.expand(s, mu[s]);
  }
}

std::vector<WeightedTrajectory> collect_trajectories(const Mdp& mdp, const Policy& policy,
                                                     std::size_t max_len, std::size_t cap) {
  std::vector<WeightedTrajectory> out;
  enumerate_trajectories(
      mdp, policy, max_len,
      [&](const Trajectory& t, double p) { out.push_back({t, p}); }, cap);
  return out;
}

// Builders ------------------------------------------------------------------

Mdp build_gridworld(std::size_t n, bool random_start) {
  require(n >= 3, "build_gridworld: side length must be >= 3");
  const std::size_t S = n * n;
  const std::size_t A = 4;
  const std::size_t goal = S - 1;
  std::vector<std::vector<Outcome>> trans(S * A);
  Table reward(S, A);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t s = r * n + c;
      for (std::size_t a = 0; a < A; ++a) {
        std::size_t nr = r, nc = c;
        switch (a) {
          case 0: nr = r > 0 ? r - 1 : r; break;      // up
          case 1: nc = c + 1 < n ? c + 1 : c; break;  // right
          case 2: nr = r + 1 < n ? r + 1 : r; break;  // down
          default: nc = c > 0 ? c - 1 : c; break;     // left
        }
        const std::size_t next = s == goal ? goal : nr * n + nc;
        trans[s * A + a] = {{next, 1.0}};
        reward(s, a) = (s != goal && next == goal) ? 1.0 : 0.0;
      }
    }
  }
  std::vector<double> mu(S, 0.0);
  if (random_start) {
    for (std::size_t s = 0; s < goal; ++s) mu[s] = 1.0 / static_cast<double>(goal);
  } else {
    mu[0] = 1.0;
  }
  std::vector<bool> terminal(S, false);
  terminal[goal] = true;
  return Mdp(S, A, std::move(trans), std::move(reward), 0.95, std::move(mu), std::move(terminal),
             4 * n * n);
}

Mdp build_chain(std::size_t num_states, double gamma, std::size_t horizon_cap) {
  require(num_states >= 2, "build_chain: needs at least 2 states");
  const std::size_t S = num_states;
  const std::size_t A = 2;
  const std::size_t goal = S - 1;
  std::vector<std::vector<Outcome>> trans(S * A);
  Table reward(S, A);
  for (std::size_t s = 0; s < S; ++s) {
    const std::size_t left = s == goal ? goal : (s > 0 ? s - 1 : 0);
    const std::size_t right = s == goal ? goal : s + 1;
    trans[s * A + 0] = {{left, 1.0}};
    trans[s * A + 1] = {{right, 1.0}};
    reward(s, 1) = (s != goal && right == goal) ? 1.0 : 0.0;
  }
  std::vector<double> mu(S, 0.0);
  mu[0] = 1.0;
  std::vector<bool> terminal(S, false);
  terminal[goal] = true;
  return Mdp(S, A, std::move(trans), std::move(reward), gamma, std::move(mu), std::move(terminal),
             horizon_cap);
}

Mdp build_bandit(std::vector<double> rewards) {
  const std::size_t A = rewards.size();
  require(A >= 1, "build_bandit: needs at least one arm");
  const std::size_t S = 2;
  std::vector<std::vector<Outcome>> trans(S * A);
  Table reward(S, A);
  for (std::size_t a = 0; a < A; ++a) {
    trans[0 * A + a] = {{1, 1.0}};
    trans[1 * A + a] = {{1, 1.0}};
    reward(0, a) = rewards[a];
  }
  return Mdp(S, A, std::move(trans), std::move(reward), 1.0, {1.0, 0.0}, {false, true}, 1);
}

double Theorem3Construction::expected_true_return() const {
  return 1.0 - std::pow(p, static_cast<double>(n + 1));
}

double Theorem3Construction::expected_estimated_return() const {
  return (1.0 - std::pow(p, static_cast<double>(n))) * static_cast<double>(m1 + m2) /
         static_cast<double>(n);
}

std::pair<Mdp, Theorem3Construction> build_theorem3_env(std::size_t n, double M, double eps) {
  require(n >= 1, "build_theorem3_env: n must be >= 1");
  require(M >= 1.0, "build_theorem3_env: M must be >= 1");
  require(eps > 0.0 && eps < 1.0, "build_theorem3_env: eps must lie in (0, 1)");
  const double nd = static_cast<double>(n);
  Theorem3Construction c;
  c.n = n;
  c.target_overestimate = M;
  c.eps = eps;
  // (a/b)^(n+1) >= 1 - eps. The smallest feasible b always admits a = b - 1.
  for (std::int64_t b = 2; c.b == 0; ++b) {
    for (std::int64_t a = 1; a < b; ++a) {
      const double q = static_cast<double>(a) / static_cast<double>(b);
      if (std::pow(q, nd + 1.0) < 1.0 - eps) continue;
      const double denom = static_cast<double>(b) * (1.0 - std::pow(q, nd));
      const double need = M * nd;
      auto x = static_cast<std::int64_t>(std::floor(need / denom));
      if (x < 1) x = 1;
      while (static_cast<double>(x) * denom < need * (1.0 - 1e-12)) ++x;
      c.a = a;
      c.b = b;
      c.x = x;
      break;
    }
  }
  c.m1 = (c.b - c.a) * c.x;
  c.m2 = c.a * c.x;
  c.p = static_cast<double>(c.m2) / static_cast<double>(c.m1 + c.m2);

  const auto A = static_cast<std::size_t>(c.m1 + c.m2);
  const std::size_t S = A + 1;
  std::vector<std::vector<Outcome>> trans(S * A);
  Table reward(S, A);
  for (std::size_t a = 0; a < A; ++a) {
    trans[a] = {{a + 1, 1.0}};
    reward(0, a) = a < static_cast<std::size_t>(c.m1) ? 1.0 : 0.0;
  }
  for (std::size_t s = 1; s < S; ++s)
    for (std::size_t a = 0; a < A; ++a) trans[s * A + a] = {{s, 1.0}};
  std::vector<double> mu(S, 0.0);
  mu[0] = 1.0;
  std::vector<bool> terminal(S, true);
  terminal[0] = false;
  Mdp mdp(S, A, std::move(trans), std::move(reward), 1.0, std::move(mu), std::move(terminal), 1);
  return {std::move(mdp), c};
}

Mdp build_zeroing_env(std::size_t num_actions) {
  require(num_actions >= 2, "build_zeroing_env: needs at least 2 actions");
  return build_bandit(std::vector<double>(num_actions, 1.0));
}

}  // namespace rbl
