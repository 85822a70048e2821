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

#include "rbl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"

namespace rbl {

namespace {

constexpr double kZ95 = 1.959963984540054;
constexpr double kZ99 = 2.5758293035489004;

using json = nlohmann::json;

json stats_json(const SampleStats& s) {
  return {{"n", s.n},
          {"mean", s.mean},
          {"std_dev", s.std_dev},
          {"std_error", s.std_error},
          {"ci95", {s.ci95.lo, s.ci95.hi}},
          {"ci99", {s.ci99.lo, s.ci99.hi}}};
}

std::vector<double> column(const BiasReport& r, double SeedRecord::*field) {
  std::vector<double> out;
  out.reserve(r.records.size());
  for (const SeedRecord& rec : r.records) out.push_back(rec.*field);
  return out;
}

// Shortcut for the shared-ownership result of an algorithm.
template <class P>
AlgorithmResult result_of(P&& policy, EstimatorKind estimator = EstimatorKind::IS) {
  return {std::make_shared<const std::decay_t<P>>(std::forward<P>(policy)), estimator};
}

}  // namespace

// Environments ----------------------------------------------------------------

std::string EnvSpec::name() const {
  switch (kind) {
    case EnvKind::Gridworld:
      return "gridworld-" + std::to_string(side) + "x" + std::to_string(side) +
             (random_start ? "-random" : "");
    case EnvKind::Chain:
      return "chain-" + std::to_string(chain_states);
    case EnvKind::Theorem3:
      return "theorem3-n" + std::to_string(t3_n);
    default:
      return "zeroing-" + std::to_string(num_actions);
  }
}

Environment make_environment(const EnvSpec& spec) {
  switch (spec.kind) {
    case EnvKind::Gridworld:
      return {spec, build_gridworld(spec.side, spec.random_start), std::nullopt};
    case EnvKind::Chain:
      return {spec, build_chain(spec.chain_states, spec.chain_gamma, spec.chain_horizon),
              std::nullopt};
    case EnvKind::Theorem3: {
      auto [mdp, construction] = build_theorem3_env(spec.t3_n, spec.t3_M, spec.t3_eps);
      return {spec, std::move(mdp), construction};
    }
    default:
      return {spec, build_zeroing_env(spec.num_actions), std::nullopt};
  }
}

// Algorithms ------------------------------------------------------------------

namespace {

struct NamedAlgorithm {
  AlgorithmKind kind;
  const char* name;
};

constexpr NamedAlgorithm kAlgorithms[] = {
    {AlgorithmKind::Identity, "identity"},
    {AlgorithmKind::PgIs, "pg-is"},
    {AlgorithmKind::PgWis, "pg-wis"},
    {AlgorithmKind::PgIsBiris, "pg-is-biris"},
    {AlgorithmKind::PgWisBiris, "pg-wis-biris"},
    {AlgorithmKind::StochasticPg, "stochastic-pg"},
    {AlgorithmKind::OneStepPg, "one-step-pg"},
    {AlgorithmKind::Argmax, "argmax"},
    {AlgorithmKind::Zeroing, "zeroing"},
    {AlgorithmKind::Theorem3Oracle, "theorem3-oracle"},
};

}  // namespace

std::string to_string(AlgorithmKind kind) {
  for (const auto& a : kAlgorithms)
    if (a.kind == kind) return a.name;
  return "unknown";
}

std::optional<AlgorithmKind> algorithm_from_string(const std::string& name) {
  for (const auto& a : kAlgorithms)
    if (name == a.name) return a.kind;
  return std::nullopt;
}

const std::vector<std::string>& algorithm_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& a : kAlgorithms) v.emplace_back(a.name);
    return v;
  }();
  return names;
}

ExperimentSetup make_setup(const EnvSpec& env_spec, std::optional<Table> behavior_logits) {
  Environment env = make_environment(env_spec);
  const std::size_t S = env.mdp.num_states();
  const std::size_t A = env.mdp.num_actions();
  TabularSoftmaxPolicy behavior(S, A);
  if (behavior_logits) {
    require(behavior_logits->rows() == S && behavior_logits->cols() == A,
            "behavior logits shape does not match the environment");
    behavior = TabularSoftmaxPolicy(std::move(*behavior_logits));
  }
  return {std::move(env), std::move(behavior), TabularSoftmaxPolicy(S, A)};
}

ExplicitPolicy theorem3_oracle_policy(const Environment& env, const ReplayBuffer& buffer,
                                      const ExplicitPolicy& behavior) {
  require(env.construction.has_value(), "theorem3 oracle needs the theorem3 environment");
  const auto m1 = static_cast<std::size_t>(env.construction->m1);
  const std::size_t A = env.mdp.num_actions();
  std::vector<double> hits(A, 0.0);
  double k = 0.0;
  for (const Trajectory& t : buffer.trajectories()) {
    if (t.steps.empty() || t.steps.front().reward != 1.0) continue;
    hits[t.steps.front().action] += 1.0;
    k += 1.0;
  }
  if (k == 0.0) return behavior;

  Table probs = behavior.prob_table();
  auto row = probs.row(0);
  std::fill(row.begin(), row.end(), 0.0);
  double distinct = 0.0;
  std::size_t unseen = 0;
  for (std::size_t a = 0; a < m1; ++a) {
    if (hits[a] > 0.0) {
      row[a] = 1.0 / k;
      distinct += 1.0;
    } else {
      ++unseen;
    }
  }
  const double rest = (k - distinct) / k;
  if (rest > 0.0) {
    // TODO: when every reward-1 action is already in the buffer the leftover
    // mass has nowhere neutral to go; it is spread over the seen actions,
    // which raises the estimate above (m1 + m2) / n for that buffer.
    const bool to_unseen = unseen > 0;
    const double share = rest / static_cast<double>(to_unseen ? unseen : distinct);
    for (std::size_t a = 0; a < m1; ++a)
      if ((hits[a] > 0.0) != to_unseen) row[a] += share;
  }
  return ExplicitPolicy(std::move(probs));
}

Algorithm make_algorithm(const AlgorithmSpec& spec, const ExperimentSetup& setup,
                         std::uint64_t master_seed) {
  const TabularSoftmaxPolicy init = setup.init;
  OptimConfig cfg = spec.optim;
  switch (spec.kind) {
    case AlgorithmKind::Identity: {
      auto fixed = std::make_shared<const TabularSoftmaxPolicy>(init);
      return [fixed](const ReplayBuffer&, Rng&) { return AlgorithmResult{fixed, EstimatorKind::IS}; };
    }
    case AlgorithmKind::PgIs:
    case AlgorithmKind::PgWis:
    case AlgorithmKind::PgIsBiris:
    case AlgorithmKind::PgWisBiris: {
      const bool wis = spec.kind == AlgorithmKind::PgWis || spec.kind == AlgorithmKind::PgWisBiris;
      const bool biris = spec.kind == AlgorithmKind::PgIsBiris || spec.kind == AlgorithmKind::PgWisBiris;
      cfg.objective = wis ? Objective::WIS : Objective::IS;
      if (!biris) cfg.biris_alpha = 0.0;
      const EstimatorKind est = wis ? EstimatorKind::WIS : EstimatorKind::IS;
      return [init, cfg, est](const ReplayBuffer& b, Rng&) {
        return result_of(train_pg(b, init, cfg).first, est);
      };
    }
    case AlgorithmKind::StochasticPg:
      return [init, cfg](const ReplayBuffer& b, Rng& rng) {
        return result_of(train_stochastic_pg(b, init, cfg, rng).first);
      };
    case AlgorithmKind::OneStepPg:
      return [init, cfg](const ReplayBuffer& b, Rng&) {
        return result_of(one_step_pg(b, init, cfg.learning_rate));
      };
    case AlgorithmKind::Argmax: {
      Rng rng(master_seed, "hypotheses", 0);
      auto set = std::make_shared<const std::vector<TabularSoftmaxPolicy>>(
          random_policy_set(setup.env.mdp, spec.hypotheses, rng));
      return [set](const ReplayBuffer& b, Rng&) {
        const auto [best, index] = argmax_over_hypotheses(b, *set);
        return AlgorithmResult{std::shared_ptr<const Policy>(set, best), EstimatorKind::IS};
      };
    }
    case AlgorithmKind::Zeroing:
      return [](const ReplayBuffer& b, Rng&) { return result_of(zeroing_policy(b.behavior(0), b)); };
    case AlgorithmKind::Theorem3Oracle: {
      auto env = std::make_shared<const Environment>(setup.env);
      return [env](const ReplayBuffer& b, Rng&) {
        return result_of(theorem3_oracle_policy(*env, b, b.behavior(0)));
      };
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown algorithm");
}

// Reports ---------------------------------------------------------------------

SampleStats summarize(const std::vector<double>& values) {
  SampleStats s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std_dev = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.std_error = s.std_dev / std::sqrt(static_cast<double>(s.n));
  }
  s.ci95 = {s.mean - kZ95 * s.std_error, s.mean + kZ95 * s.std_error};
  s.ci99 = {s.mean - kZ99 * s.std_error, s.mean + kZ99 * s.std_error};
  return s;
}

void BiasReport::aggregate() {
  std::sort(records.begin(), records.end(),
            [](const SeedRecord& a, const SeedRecord& b) { return a.seed < b.seed; });
  reuse_error = summarize(column(*this, &SeedRecord::reuse_error));
  mean_j_true = summarize(column(*this, &SeedRecord::j_true)).mean;
  mean_j_hat = summarize(column(*this, &SeedRecord::j_hat)).mean;
  relative_reuse_bias = reuse_error.mean / mean_j_true;
  double var = 0.0;
  for (const SeedRecord& r : records) var += r.j_true_std_error * r.j_true_std_error;
  j_true_std_error = records.empty() ? 0.0 : std::sqrt(var) / static_cast<double>(records.size());
}

// Runs ------------------------------------------------------------------------

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        // An index, once claimed, always runs, so every index below a
        // failing one has run too.
        while (!failed) {
          const std::size_t i = next++;
          if (i >= n) break;
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

McEstimate mc_return(const Mdp& mdp, const Policy& policy, std::size_t rollouts, Rng& rng) {
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t k = 0; k < rollouts; ++k) {
    const double r = discounted_return(sample_trajectory(mdp, policy, rng), mdp.gamma());
    sum += r;
    sum_sq += r * r;
  }
  const double n = static_cast<double>(rollouts);
  const double mean = sum / n;
  const double var = rollouts > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

double estimate(const ReplayBuffer& buffer, const Policy& policy, EstimatorKind kind) {
  return kind == EstimatorKind::WIS ? wis_estimate(buffer, policy).value
                                    : is_estimate(buffer, policy).value;
}

SeedRecord evaluate_seed(const ExperimentSetup& setup, const Algorithm& algorithm, std::size_t m,
                         std::uint64_t seed, const RunOptions& options) {
  Rng buffer_rng(options.master_seed, "buffer", seed);
  const ReplayBuffer buffer = sample_buffer(setup.env.mdp, setup.behavior, m, buffer_rng);
  Rng algo_rng(options.master_seed, "algorithm", seed);
  const AlgorithmResult out = algorithm(buffer, algo_rng);
  SeedRecord rec;
  rec.seed = seed;
  rec.j_hat = estimate(buffer, *out.policy, out.estimator);
  if (options.j_true_mode == JTrueMode::Exact) {
    rec.j_true = exact_return(setup.env.mdp, *out.policy);
  } else {
    Rng eval_rng(options.master_seed, "evaluation", seed);
    const McEstimate mc = mc_return(setup.env.mdp, *out.policy, options.mc_rollouts, eval_rng);
    rec.j_true = mc.estimate;
    rec.j_true_std_error = mc.std_error;
  }
  rec.reuse_error = rec.j_hat - rec.j_true;
  return rec;
}

json report_json(const BiasReport& r) {
  return {{"env", r.env},
          {"algorithm", r.algorithm},
          {"buffer_size", r.buffer_size},
          {"reuse_error", stats_json(r.reuse_error)},
          {"mean_j_true", r.mean_j_true},
          {"mean_j_hat", r.mean_j_hat},
          {"relative_reuse_bias", r.relative_reuse_bias}};
}

}  // namespace

BiasReport measure_reuse_bias(const ExperimentSetup& setup, const Algorithm& algorithm,
                              const std::string& algorithm_name, std::size_t m,
                              std::size_t n_seeds, const RunOptions& options) {
  require(m >= 1, "measure_reuse_bias: buffer size must be >= 1");
  require(n_seeds >= 1, "measure_reuse_bias: needs at least one seed");
  BiasReport report;
  report.env = setup.env.spec.name();
  report.algorithm = algorithm_name;
  report.buffer_size = m;
  report.j_true_mode = options.j_true_mode;
  report.records.resize(n_seeds);
  parallel_for(n_seeds, options.jobs, [&](std::size_t i) {
    report.records[i] = evaluate_seed(setup, algorithm, m, i, options);
  });
  report.aggregate();
  return report;
}

BiasReport measure_reuse_bias(const ExperimentSetup& setup, const AlgorithmSpec& algorithm,
                              std::size_t m, std::size_t n_seeds, const RunOptions& options) {
  return measure_reuse_bias(setup, make_algorithm(algorithm, setup, options.master_seed),
                            to_string(algorithm.kind), m, n_seeds, options);
}

CheckResult verify_overestimation_argmax(const ExperimentSetup& setup, std::size_t hypotheses,
                                         std::size_t m, std::size_t n_seeds,
                                         const RunOptions& options) {
  require(hypotheses >= 1, "verify_overestimation_argmax: needs at least one hypothesis");
  AlgorithmSpec spec;
  spec.kind = AlgorithmKind::Argmax;
  spec.hypotheses = hypotheses;
  BiasReport report = measure_reuse_bias(setup, spec, m, n_seeds, options);
  const double lcb = report.reuse_error.ci99.lo;
  CheckResult out;
  out.name = "thm1";
  out.pass = lcb >= 0.0;
  out.statistics = report_json(report);
  out.statistics["hypotheses"] = hypotheses;
  out.statistics["lcb99"] = lcb;
  out.statistics["strictly_positive"] = lcb > 0.0;
  out.reports.push_back(std::move(report));
  return out;
}

CheckResult verify_one_step_pg(const ExperimentSetup& setup, double learning_rate, std::size_t m,
                               std::size_t n_seeds, const RunOptions& options) {
  require(learning_rate >= 0.0, "verify_one_step_pg: learning rate must be >= 0");
  const Mdp& mdp = setup.env.mdp;
  const double j_init = exact_return(mdp, setup.init);
  const std::vector<double> rates = {learning_rate, 2.0 * learning_rate, 0.0};
  // gap[r][i]: raw reuse error, cv[r][i]: same minus the zero-mean reuse
  // error of the buffer-independent initial policy.
  std::vector<std::vector<double>> gap(rates.size(), std::vector<double>(n_seeds));
  std::vector<std::vector<double>> cv = gap;
  std::vector<SeedRecord> records(n_seeds);
  parallel_for(n_seeds, options.jobs, [&](std::size_t i) {
    Rng rng(options.master_seed, "buffer", i);
    const ReplayBuffer buffer = sample_buffer(mdp, setup.behavior, m, rng);
    const double base = is_estimate(buffer, setup.init).value - j_init;
    for (std::size_t r = 0; r < rates.size(); ++r) {
      const TabularSoftmaxPolicy next = one_step_pg(buffer, setup.init, rates[r]);
      const double j_hat = is_estimate(buffer, next).value;
      const double j_true = exact_return(mdp, next);
      gap[r][i] = j_hat - j_true;
      cv[r][i] = gap[r][i] - base;
      if (r == 0) records[i] = {i, j_true, j_hat, j_hat - j_true, 0.0};
    }
  });
  const SampleStats raw = summarize(gap[0]);
  const SampleStats adj = summarize(cv[0]);
  const SampleStats raw_double = summarize(gap[1]);
  const SampleStats adj_double = summarize(cv[1]);
  const SampleStats control = summarize(gap[2]);
  const bool control_ok = control.ci99.lo <= 0.0 && 0.0 <= control.ci99.hi;

  BiasReport report;
  report.env = setup.env.spec.name();
  report.algorithm = "one-step-pg";
  report.buffer_size = m;
  report.records = std::move(records);
  report.aggregate();

  CheckResult out;
  out.name = "thm2";
  out.pass = adj.ci99.lo > 0.0 && control_ok;
  out.statistics = {
      {"learning_rate", learning_rate},
      {"buffer_size", m},
      {"seeds", n_seeds},
      {"j_initial", j_init},
      {"gap", stats_json(raw)},
      {"gap_control_variate", stats_json(adj)},
      {"lcb99", adj.ci99.lo},
      {"gap_double_lr", stats_json(raw_double)},
      {"gap_control_variate_double_lr", stats_json(adj_double)},
      {"doubling_increases_gap", adj_double.mean > adj.mean},
      {"control_lr0", stats_json(control)},
      {"control_within_ci", control_ok},
  };
  out.reports.push_back(std::move(report));
  return out;
}

CheckResult verify_theorem3(std::size_t n, double M, double eps, std::size_t n_seeds,
                            const RunOptions& options) {
  EnvSpec spec;
  spec.kind = EnvKind::Theorem3;
  spec.t3_n = n;
  spec.t3_M = M;
  spec.t3_eps = eps;
  const ExperimentSetup setup = make_setup(spec);
  const Theorem3Construction& c = *setup.env.construction;
  AlgorithmSpec algo;
  algo.kind = AlgorithmKind::Theorem3Oracle;
  BiasReport report = measure_reuse_bias(setup, algo, n, n_seeds, options);

  const SampleStats j = summarize(column(report, &SeedRecord::j_true));
  const SampleStats jh = summarize(column(report, &SeedRecord::j_hat));
  const double ej = c.expected_true_return();
  const double ejh = c.expected_estimated_return();
  const bool j_match = std::abs(j.mean - ej) <= 4.0 * j.std_error;
  const bool jh_match = std::abs(jh.mean - ejh) <= 4.0 * jh.std_error;

  Table best(setup.env.mdp.num_states(), setup.env.mdp.num_actions(), 0.0);
  for (std::size_t s = 0; s < best.rows(); ++s) best(s, 0) = 1.0;
  const double j_optimal = exact_return(setup.env.mdp, ExplicitPolicy(std::move(best)));

  CheckResult out;
  out.name = "thm3";
  out.pass = j_match && jh_match && ej <= eps && ejh >= M && j_optimal == 1.0;
  out.statistics = {
      {"construction",
       {{"a", c.a}, {"b", c.b}, {"x", c.x}, {"M1", c.m1}, {"M2", c.m2}, {"p", c.p}, {"n", c.n}}},
      {"closed_form", {{"expected_j", ej}, {"expected_j_hat", ejh}}},
      {"monte_carlo", {{"j", stats_json(j)}, {"j_hat", stats_json(jh)}}},
      {"j_within_4se", j_match},
      {"j_hat_within_4se", jh_match},
      {"expected_j_le_eps", ej <= eps},
      {"expected_j_hat_ge_M", ejh >= M},
      {"mc_j_le_eps", j.mean <= eps},
      {"mc_j_hat_ge_M", jh.mean >= M},
      {"j_optimal", j_optimal},
  };
  out.reports.push_back(std::move(report));
  return out;
}

CheckResult verify_zeroing(const std::vector<std::size_t>& buffer_sizes, std::size_t num_actions,
                           std::size_t n_seeds, const RunOptions& options) {
  EnvSpec spec;
  spec.kind = EnvKind::Zeroing;
  spec.num_actions = num_actions;
  const ExperimentSetup setup = make_setup(spec);
  CheckResult out;
  out.name = "appendix-c";
  out.pass = true;
  out.statistics["num_actions"] = num_actions;
  out.statistics["per_buffer_size"] = json::array();
  constexpr std::size_t kMaxAttempts = 1000;
  for (std::size_t m : buffer_sizes) {
    require(m < num_actions, "verify_zeroing: every buffer size must be below num_actions");
    BiasReport report;
    report.env = spec.name();
    report.algorithm = "zeroing";
    report.buffer_size = m;
    report.records.resize(n_seeds);
    std::vector<std::size_t> resamples(n_seeds, 0);
    parallel_for(n_seeds, options.jobs, [&](std::size_t i) {
      Rng rng(options.master_seed, "buffer", i);
      for (std::size_t attempt = 0;; ++attempt) {
        const ReplayBuffer buffer = sample_buffer(setup.env.mdp, setup.behavior, m, rng);
        try {
          const ExplicitPolicy pol = zeroing_policy(buffer.behavior(0), buffer);
          SeedRecord rec;
          rec.seed = i;
          rec.j_hat = is_estimate(buffer, pol).value;
          rec.j_true = exact_return(setup.env.mdp, pol);
          rec.reuse_error = rec.j_hat - rec.j_true;
          report.records[i] = rec;
          resamples[i] = attempt;
          return;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::AllActionsSampled || attempt + 1 >= kMaxAttempts) throw;
        }
      }
    });
    report.aggregate();
    bool exact = true;
    std::size_t total_resamples = 0;
    for (std::size_t i = 0; i < n_seeds; ++i) {
      const SeedRecord& r = report.records[i];
      exact = exact && r.reuse_error == -1.0 && r.j_true == 1.0 && r.j_hat == 0.0;
      total_resamples += resamples[i];
    }
    out.pass = out.pass && exact;
    out.statistics["per_buffer_size"].push_back({{"buffer_size", m},
                                                 {"seeds", n_seeds},
                                                 {"all_exactly_minus_one", exact},
                                                 {"resampled_buffers", total_resamples},
                                                 {"mean_reuse_error", report.reuse_error.mean}});
    out.reports.push_back(std::move(report));
  }
  return out;
}

CheckResult bound_coverage(const ExperimentSetup& setup, const AlgorithmSpec& algorithm,
                           std::size_t m, double delta, std::size_t n_seeds,
                           const RunOptions& options) {
  require(m >= 2, "bound_coverage: buffer size must be >= 2");
  const Algorithm algo = make_algorithm(algorithm, setup, options.master_seed);
  const Mdp& mdp = setup.env.mdp;
  std::vector<SeedRecord> records(n_seeds);
  std::vector<double> eps1(n_seeds), eps2(n_seeds), bound(n_seeds);
  std::vector<int> exact_kl(n_seeds, 1);
  parallel_for(n_seeds, options.jobs, [&](std::size_t i) {
    Rng buffer_rng(options.master_seed, "buffer", i);
    const ReplayBuffer buffer = sample_buffer(mdp, setup.behavior, m, buffer_rng);
    Rng algo_rng(options.master_seed, "algorithm", i);
    const AlgorithmResult res = algo(buffer, algo_rng);
    const Policy& pol = *res.policy;
    // The bound is stated for the IS estimate whatever the training objective.
    const double j_hat = is_estimate(buffer, pol).value;
    const double j_true = exact_return(mdp, pol);
    records[i] = {i, j_true, j_hat, j_hat - j_true, 0.0};
    try {
      eps1[i] = kl_trajectory_exact(mdp, pol, buffer.behavior(0), mdp.horizon_cap());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EnumerationCapExceeded) throw;
      Rng kl_rng(options.master_seed, "evaluation", i);
      eps1[i] = kl_trajectory_mc(mdp, pol, buffer.behavior(0), options.mc_rollouts, kl_rng).estimate;
      exact_kl[i] = 0;
    }
    eps2[i] = epsilon2_loss(pol, buffer);
    bound[i] = reuse_error_bound({std::max(eps1[i], 0.0), eps2[i], m, delta});
  });
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n_seeds; ++i)
    if (std::abs(records[i].reuse_error) <= bound[i]) ++covered;
  const double coverage = static_cast<double>(covered) / static_cast<double>(n_seeds);

  BiasReport report;
  report.env = setup.env.spec.name();
  report.algorithm = to_string(algorithm.kind);
  report.buffer_size = m;
  report.records = std::move(records);
  report.aggregate();

  CheckResult out;
  out.name = "thm4-coverage";
  out.pass = coverage >= 1.0 - delta;
  out.statistics = {
      {"delta", delta},
      {"buffer_size", m},
      {"seeds", n_seeds},
      {"coverage", coverage},
      {"required", 1.0 - delta},
      {"eps1_exact", std::all_of(exact_kl.begin(), exact_kl.end(), [](int v) { return v == 1; })},
      {"eps1", stats_json(summarize(eps1))},
      {"eps2", stats_json(summarize(eps2))},
      {"bound", stats_json(summarize(bound))},
      {"reuse_error", stats_json(report.reuse_error)},
  };
  out.reports.push_back(std::move(report));
  return out;
}

StabilityReport stability_probe(const ExperimentSetup& setup, std::size_t m,
                                const OptimConfig& config, std::size_t n_algo_seeds,
                                std::size_t n_buffer_pairs, const RunOptions& options) {
  require(n_algo_seeds >= 1 && n_buffer_pairs >= 1, "stability_probe: needs seeds and pairs");
  const Mdp& mdp = setup.env.mdp;
  // Softmax policies have full support, so one enumeration serves every theta.
  const std::vector<WeightedTrajectory> support =
      collect_trajectories(mdp, TabularSoftmaxPolicy(mdp.num_states(), mdp.num_actions()),
                           mdp.horizon_cap());
  std::vector<VisitCounts> counts;
  counts.reserve(support.size());
  for (const auto& wt : support) counts.push_back(VisitCounts::of(wt.trajectory));
  // Dynamics factor of every enumerated trajectory (mu and P terms).
  const TabularSoftmaxPolicy uniform(mdp.num_states(), mdp.num_actions());
  std::vector<double> log_dynamics(support.size());
  for (std::size_t t = 0; t < support.size(); ++t)
    log_dynamics[t] = std::log(support[t].prob) - counts[t].log_prob(uniform);

  auto traj_probs = [&](const Policy& pol) {
    std::vector<double> p(support.size());
    for (std::size_t t = 0; t < support.size(); ++t)
      p[t] = std::exp(log_dynamics[t] + counts[t].log_prob(pol));
    return p;
  };

  struct PairResult {
    double beta = 0.0;
    double M = 0.0;
    double L1 = 0.0;
    double L2 = 0.0;
  };
  std::vector<PairResult> pairs(n_buffer_pairs);

  parallel_for(n_buffer_pairs, options.jobs, [&](std::size_t p) {
    Rng rng(options.master_seed, "stability-buffer", p);
    const ReplayBuffer first = sample_buffer(mdp, setup.behavior, m, rng);
    const std::size_t swap_index = rng.uniform_index(m);
    const ReplayBuffer second =
        first.with_replaced(swap_index, sample_trajectory(mdp, setup.behavior, rng));
    std::vector<double> diff(support.size(), 0.0);
    PairResult pr;
    for (std::size_t a = 0; a < n_algo_seeds; ++a) {
      std::vector<double> final_probs[2];
      const ReplayBuffer* buffers[2] = {&first, &second};
      for (int side = 0; side < 2; ++side) {
        // Both sides share the algorithm's random stream.
        Rng algo_rng(options.master_seed, "stability-algorithm", p * n_algo_seeds + a);
        std::vector<double> prev_probs;
        Table prev_theta;
        auto observe = [&](std::size_t, const TabularSoftmaxPolicy& pol) {
          std::vector<double> probs = traj_probs(pol);
          for (std::size_t t = 0; t < support.size(); ++t) {
            Table score(mdp.num_states(), mdp.num_actions());
            counts[t].add_score(pol, 1.0, score);
            pr.L1 = std::max(pr.L1, score.norm());
          }
          if (!prev_probs.empty()) {
            Table step = pol.logits();
            step.axpy(-1.0, prev_theta);
            const double dist = step.norm();
            if (dist > 0.0) {
              for (std::size_t t = 0; t < support.size(); ++t)
                pr.L2 = std::max(pr.L2, std::abs(probs[t] - prev_probs[t]) / dist);
            }
          }
          prev_theta = pol.logits();
          prev_probs = std::move(probs);
        };
        const auto [pol, trace] =
            train_stochastic_pg(*buffers[side], setup.init, config, algo_rng, observe);
        for (const TraceRecord& tr : trace) pr.M = std::max(pr.M, tr.penalty);
        pr.M = std::max(pr.M, epsilon2_loss(pol, *buffers[side]));
        final_probs[side] = traj_probs(pol);
      }
      for (std::size_t t = 0; t < support.size(); ++t)
        diff[t] += (final_probs[0][t] - final_probs[1][t]) / static_cast<double>(n_algo_seeds);
    }
    for (double d : diff) pr.beta = std::max(pr.beta, std::abs(d));
    pairs[p] = pr;
  });

  StabilityReport rep;
  for (const PairResult& pr : pairs) {
    rep.empirical_beta = std::max(rep.empirical_beta, pr.beta);
    rep.measured_M = std::max(rep.measured_M, pr.M);
    rep.measured_L1 = std::max(rep.measured_L1, pr.L1);
    rep.measured_L2 = std::max(rep.measured_L2, pr.L2);
  }
  for (std::size_t k = 0; k < config.steps; ++k) rep.step_size_sum += config.step_size(k);
  rep.theorem6_beta =
      rep.step_size_sum * (2.0 + 2.0 * rep.measured_M) * rep.measured_L1 * rep.measured_L2;
  rep.trajectories = support.size();
  rep.buffer_pairs = n_buffer_pairs;
  rep.algo_seeds = n_algo_seeds;
  return rep;
}

CheckResult verify_stability(const ExperimentSetup& setup, std::size_t m,
                             const OptimConfig& config, std::size_t n_algo_seeds,
                             std::size_t n_buffer_pairs, std::size_t n_seeds,
                             const RunOptions& options) {
  const StabilityReport rep =
      stability_probe(setup, m, config, n_algo_seeds, n_buffer_pairs, options);
  AlgorithmSpec algo;
  algo.kind = AlgorithmKind::StochasticPg;
  algo.optim = config;
  BiasReport report = measure_reuse_bias(setup, algo, m, n_seeds, options);
  const double slack = rep.empirical_beta + 4.0 * report.reuse_error.std_error;
  const bool thm6 = rep.empirical_beta <= rep.theorem6_beta;
  const bool thm5 = std::abs(report.reuse_error.mean) <= slack;

  CheckResult out;
  out.name = "stability";
  out.pass = thm6 && thm5;
  out.statistics = {
      {"empirical_beta", rep.empirical_beta},
      {"theorem6_beta", rep.theorem6_beta},
      {"measured_M", rep.measured_M},
      {"measured_L1", rep.measured_L1},
      {"measured_L2", rep.measured_L2},
      {"step_size_sum", rep.step_size_sum},
      {"beta_within_theorem6", thm6},
      {"reuse_error", stats_json(report.reuse_error)},
      {"reuse_bias_within_beta", thm5},
      {"theorem5_slack", slack},
  };
  out.stability = rep;
  out.reports.push_back(std::move(report));
  return out;
}

std::vector<BiasReport> biris_comparison(const ExperimentSetup& setup,
                                         const std::vector<std::size_t>& buffer_sizes,
                                         const std::vector<AlgorithmSpec>& algorithms,
                                         std::size_t n_seeds, const RunOptions& options) {
  std::vector<BiasReport> out;
  for (std::size_t m : buffer_sizes)
    for (const AlgorithmSpec& a : algorithms)
      out.push_back(measure_reuse_bias(setup, a, m, n_seeds, options));
  return out;
}

}  // namespace rbl
