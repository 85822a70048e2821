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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rbl/mdp.hpp"
#include "rbl/optim.hpp"
#include "rbl/policy.hpp"

namespace rbl {

// Environments ----------------------------------------------------------------

enum class EnvKind { Gridworld, Chain, Theorem3, Zeroing };

struct EnvSpec {
  EnvKind kind = EnvKind::Gridworld;
  // gridworld
  std::size_t side = 5;
  bool random_start = false;
  // chain
  std::size_t chain_states = 3;
  double chain_gamma = 0.9;
  std::size_t chain_horizon = 4;
  // theorem3
  std::size_t t3_n = 2;
  double t3_M = 1.0;
  double t3_eps = 0.5;
  // zeroing
  std::size_t num_actions = 10;

  std::string name() const;
};

struct Environment {
  EnvSpec spec;
  Mdp mdp;
  std::optional<Theorem3Construction> construction;
};

Environment make_environment(const EnvSpec& spec);

// Algorithms ------------------------------------------------------------------

enum class AlgorithmKind {
  Identity,
  PgIs,
  PgWis,
  PgIsBiris,
  PgWisBiris,
  StochasticPg,
  OneStepPg,
  Argmax,
  Zeroing,
  Theorem3Oracle,
};

std::string to_string(AlgorithmKind kind);
std::optional<AlgorithmKind> algorithm_from_string(const std::string& name);
const std::vector<std::string>& algorithm_names();

struct AlgorithmSpec {
  AlgorithmKind kind = AlgorithmKind::PgIs;
  OptimConfig optim;
  std::size_t hypotheses = 8;  // argmax only
};

enum class EstimatorKind { IS, WIS };

struct AlgorithmResult {
  std::shared_ptr<const Policy> policy;
  EstimatorKind estimator = EstimatorKind::IS;
};

/// An off-policy algorithm O(pi_0, B): maps a buffer (and its own random
/// stream) to a policy.
using Algorithm = std::function<AlgorithmResult(const ReplayBuffer&, Rng&)>;

/// Context shared by all seeds of one experiment.
struct ExperimentSetup {
  Environment env;
  TabularSoftmaxPolicy behavior;
  TabularSoftmaxPolicy init;
};

/// Behavior and initial policy default to zero logits (uniform).
ExperimentSetup make_setup(const EnvSpec& env, std::optional<Table> behavior_logits = std::nullopt);

/// Builds the algorithm. Argmax hypotheses are drawn once from the master seed.
Algorithm make_algorithm(const AlgorithmSpec& spec, const ExperimentSetup& setup,
                         std::uint64_t master_seed);

/// O* on the one-decision construction: no reward-1 trajectory in the buffer
/// gives the behavior policy; otherwise every distinct reward-1 buffer action
/// gets 1/k (k = number of reward-1 trajectories) and the remaining mass goes
/// to reward-1 actions absent from the buffer.
ExplicitPolicy theorem3_oracle_policy(const Environment& env, const ReplayBuffer& buffer,
                                      const ExplicitPolicy& behavior);

// Reports ---------------------------------------------------------------------

enum class JTrueMode { Exact, MonteCarlo };

struct RunOptions {
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
  JTrueMode j_true_mode = JTrueMode::Exact;
  std::size_t mc_rollouts = 4000;
};

struct SeedRecord {
  std::uint64_t seed = 0;
  double j_true = 0.0;
  double j_hat = 0.0;
  double reuse_error = 0.0;
  double j_true_std_error = 0.0;  // MonteCarlo mode only
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct SampleStats {
  std::size_t n = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double std_error = 0.0;
  Interval ci95;
  Interval ci99;
};

SampleStats summarize(const std::vector<double>& values);

struct BiasReport {
  std::string env;
  std::string algorithm;
  std::size_t buffer_size = 0;
  bool shared_behavior = true;
  JTrueMode j_true_mode = JTrueMode::Exact;
  std::vector<SeedRecord> records;

  SampleStats reuse_error;
  double mean_j_true = 0.0;
  double mean_j_hat = 0.0;
  double relative_reuse_bias = 0.0;
  double j_true_std_error = 0.0;  // propagated MC error of mean_j_true

  void aggregate();
};

struct StabilityReport {
  double empirical_beta = 0.0;
  double theorem6_beta = 0.0;
  double measured_M = 0.0;
  double measured_L1 = 0.0;
  double measured_L2 = 0.0;
  double step_size_sum = 0.0;
  std::size_t trajectories = 0;
  std::size_t buffer_pairs = 0;
  std::size_t algo_seeds = 0;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  nlohmann::json statistics;
  std::vector<BiasReport> reports;
  std::optional<StabilityReport> stability;
};

// Runs ------------------------------------------------------------------------

/// Runs fn(0..n-1) on `jobs` worker threads. Rethrows the exception of the
/// lowest failing index.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

/// Per seed: sample B from the behavior policy, run the algorithm, estimate on
/// the same B, evaluate J exactly (or by fresh rollouts).
BiasReport measure_reuse_bias(const ExperimentSetup& setup, const AlgorithmSpec& algorithm,
                              std::size_t m, std::size_t n_seeds, const RunOptions& options);

BiasReport measure_reuse_bias(const ExperimentSetup& setup, const Algorithm& algorithm,
                              const std::string& algorithm_name, std::size_t m,
                              std::size_t n_seeds, const RunOptions& options);

CheckResult verify_overestimation_argmax(const ExperimentSetup& setup, std::size_t hypotheses,
                                         std::size_t m, std::size_t n_seeds,
                                         const RunOptions& options);

CheckResult verify_one_step_pg(const ExperimentSetup& setup, double learning_rate, std::size_t m,
                               std::size_t n_seeds, const RunOptions& options);

CheckResult verify_theorem3(std::size_t n, double M, double eps, std::size_t n_seeds,
                            const RunOptions& options);

CheckResult verify_zeroing(const std::vector<std::size_t>& buffer_sizes, std::size_t num_actions,
                           std::size_t n_seeds, const RunOptions& options);

CheckResult bound_coverage(const ExperimentSetup& setup, const AlgorithmSpec& algorithm,
                           std::size_t m, double delta, std::size_t n_seeds,
                           const RunOptions& options);

StabilityReport stability_probe(const ExperimentSetup& setup, std::size_t m,
                                const OptimConfig& config, std::size_t n_algo_seeds,
                                std::size_t n_buffer_pairs, const RunOptions& options);

/// Stability probe plus the reuse bias of the probed algorithm, compared
/// against the measured beta.
CheckResult verify_stability(const ExperimentSetup& setup, std::size_t m,
                             const OptimConfig& config, std::size_t n_algo_seeds,
                             std::size_t n_buffer_pairs, std::size_t n_seeds,
                             const RunOptions& options);

std::vector<BiasReport> biris_comparison(const ExperimentSetup& setup,
                                         const std::vector<std::size_t>& buffer_sizes,
                                         const std::vector<AlgorithmSpec>& algorithms,
                                         std::size_t n_seeds, const RunOptions& options);

}  // namespace rbl
