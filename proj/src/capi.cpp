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

#include "rbl/rbl.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <memory>
#include <new>
#include <span>
#include <string>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"
#include "rbl/experiment.hpp"
#include "rbl/mdp.hpp"
#include "rbl/optim.hpp"
#include "rbl/policy.hpp"

struct rbl_mdp {
  rbl::Mdp mdp;
};

struct rbl_policy {
  std::shared_ptr<const rbl::Policy> policy;
  const rbl::TabularSoftmaxPolicy* softmax = nullptr;  // set when the policy has logits
};

struct rbl_buffer {
  rbl::ReplayBuffer buffer;
};

namespace {

thread_local std::string last_error;

rbl_status status_of(rbl::ErrorCode code) { return static_cast<rbl_status>(code); }

template <class F>
rbl_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return RBL_OK;
  } catch (const rbl::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RBL_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RBL_INTERNAL_ERROR;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) rbl::fail(rbl::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rbl_policy* wrap(rbl::TabularSoftmaxPolicy p) {
  auto sp = std::make_shared<const rbl::TabularSoftmaxPolicy>(std::move(p));
  return new rbl_policy{sp, sp.get()};
}

}  // namespace

extern "C" {

const char* rbl_version(void) { return rbl::kVersion; }

const char* rbl_status_name(rbl_status status) {
  switch (status) {
    case RBL_OK: return "ok";
    case RBL_INVALID_ARGUMENT: return "invalid argument";
    case RBL_ZERO_BEHAVIOR_PROBABILITY: return "zero behavior probability";
    case RBL_ENUMERATION_CAP_EXCEEDED: return "enumeration cap exceeded";
    case RBL_ALL_ACTIONS_SAMPLED: return "all actions sampled";
    case RBL_ALL_WEIGHTS_ZERO: return "all weights zero";
    case RBL_NON_FINITE_GRADIENT: return "non-finite gradient";
    case RBL_CONFIG_ERROR: return "config error";
    case RBL_IO_ERROR: return "io error";
    case RBL_VERIFICATION_FAILED: return "verification failed";
    default: return "internal error";
  }
}

const char* rbl_last_error(void) { return last_error.c_str(); }

rbl_status rbl_mdp_gridworld(size_t side, int random_start, rbl_mdp** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rbl_mdp{rbl::build_gridworld(side, random_start != 0)};
  });
}

rbl_status rbl_mdp_chain(size_t num_states, double gamma, size_t horizon, rbl_mdp** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rbl_mdp{rbl::build_chain(num_states, gamma, horizon)};
  });
}

rbl_status rbl_mdp_theorem3(size_t n, double M, double eps, rbl_mdp** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rbl_mdp{rbl::build_theorem3_env(n, M, eps).first};
  });
}

rbl_status rbl_mdp_zeroing(size_t num_actions, rbl_mdp** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rbl_mdp{rbl::build_zeroing_env(num_actions)};
  });
}

void rbl_mdp_destroy(rbl_mdp* mdp) { delete mdp; }
size_t rbl_mdp_num_states(const rbl_mdp* mdp) { return mdp ? mdp->mdp.num_states() : 0; }
size_t rbl_mdp_num_actions(const rbl_mdp* mdp) { return mdp ? mdp->mdp.num_actions() : 0; }

rbl_status rbl_policy_uniform(const rbl_mdp* mdp, rbl_policy** out) {
  return guarded([&] {
    need(mdp, "mdp");
    need(out, "out");
    *out = wrap(rbl::TabularSoftmaxPolicy(mdp->mdp.num_states(), mdp->mdp.num_actions()));
  });
}

rbl_status rbl_policy_softmax(size_t num_states, size_t num_actions, const double* logits,
                              rbl_policy** out) {
  return guarded([&] {
    need(logits, "logits");
    need(out, "out");
    rbl::Table t(num_states, num_actions);
    std::copy(logits, logits + num_states * num_actions, t.data().begin());
    *out = wrap(rbl::TabularSoftmaxPolicy(std::move(t)));
  });
}

void rbl_policy_destroy(rbl_policy* policy) { delete policy; }

rbl_status rbl_policy_prob(const rbl_policy* policy, size_t state, size_t action, double* out) {
  return guarded([&] {
    need(policy, "policy");
    need(out, "out");
    const rbl::Policy& p = *policy->policy;
    rbl::require(state < p.num_states() && action < p.num_actions(),
                 "rbl_policy_prob: index out of range");
    *out = p.prob(state, action);
  });
}

rbl_status rbl_exact_return(const rbl_mdp* mdp, const rbl_policy* policy, double* out) {
  return guarded([&] {
    need(mdp, "mdp");
    need(policy, "policy");
    need(out, "out");
    *out = rbl::exact_return(mdp->mdp, *policy->policy);
  });
}

rbl_status rbl_buffer_sample(const rbl_mdp* mdp, const rbl_policy* behavior, size_t m,
                             uint64_t seed, rbl_buffer** out) {
  return guarded([&] {
    need(mdp, "mdp");
    need(behavior, "behavior");
    need(out, "out");
    rbl::Rng rng(seed);
    *out = new rbl_buffer{rbl::sample_buffer(mdp->mdp, *behavior->policy, m, rng)};
  });
}

void rbl_buffer_destroy(rbl_buffer* buffer) { delete buffer; }
size_t rbl_buffer_size(const rbl_buffer* buffer) { return buffer ? buffer->buffer.size() : 0; }

rbl_status rbl_is_estimate(const rbl_buffer* buffer, const rbl_policy* target, double* out) {
  return guarded([&] {
    need(buffer, "buffer");
    need(target, "target");
    need(out, "out");
    *out = rbl::is_estimate(buffer->buffer, *target->policy).value;
  });
}

rbl_status rbl_wis_estimate(const rbl_buffer* buffer, const rbl_policy* target, double* out) {
  return guarded([&] {
    need(buffer, "buffer");
    need(target, "target");
    need(out, "out");
    *out = rbl::wis_estimate(buffer->buffer, *target->policy).value;
  });
}

rbl_status rbl_epsilon2_loss(const rbl_buffer* buffer, const rbl_policy* target, double* out) {
  return guarded([&] {
    need(buffer, "buffer");
    need(target, "target");
    need(out, "out");
    *out = rbl::epsilon2_loss(*target->policy, buffer->buffer);
  });
}

rbl_status rbl_reuse_error_bound(double eps1, double eps2, size_t m, double delta, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = rbl::reuse_error_bound({eps1, eps2, m, delta});
  });
}

rbl_status rbl_finite_hypothesis_bound(size_t m, size_t h_size, double delta, double rho_max,
                                       double* out) {
  return guarded([&] {
    need(out, "out");
    *out = rbl::finite_hypothesis_bound(m, h_size, delta, rho_max);
  });
}

rbl_status rbl_product_ratio_bound(double eps, size_t T, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = rbl::product_ratio_bound(eps, T);
  });
}

rbl_status rbl_sac_ratio(double log_p_target, double log_p_behavior, double beta_clip,
                         double* out) {
  return guarded([&] {
    need(out, "out");
    *out = rbl::sac_ratio(log_p_target, log_p_behavior, beta_clip);
  });
}

rbl_status rbl_gaussian_ratio(const double* action, const double* mean_target,
                              const double* mean_behavior, size_t dim, double scale,
                              double* out) {
  return guarded([&] {
    need(action, "action");
    need(mean_target, "mean_target");
    need(mean_behavior, "mean_behavior");
    need(out, "out");
    *out = rbl::gaussian_ratio(std::span(action, dim), std::span(mean_target, dim),
                               std::span(mean_behavior, dim), scale);
  });
}

rbl_status rbl_train_pg(const rbl_buffer* buffer, const rbl_policy* init, double learning_rate,
                        size_t steps, double biris_alpha, rbl_objective objective,
                        rbl_policy** out) {
  return guarded([&] {
    need(buffer, "buffer");
    need(init, "init");
    need(out, "out");
    rbl::require(init->softmax != nullptr, "rbl_train_pg: init must be a softmax policy");
    rbl::OptimConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.steps = steps;
    cfg.biris_alpha = biris_alpha;
    cfg.objective = objective == RBL_OBJECTIVE_WIS ? rbl::Objective::WIS : rbl::Objective::IS;
    *out = wrap(rbl::train_pg(buffer->buffer, *init->softmax, cfg).first);
  });
}

rbl_status rbl_config_resolve(const char* subcommand, const char* check, const char* config_json,
                              const char* const* overrides, size_t n_overrides,
                              char** resolved_json, char** errors) {
  if (resolved_json) *resolved_json = nullptr;
  if (errors) *errors = nullptr;
  return guarded([&] {
    need(subcommand, "subcommand");
    need(resolved_json, "resolved_json");
    std::optional<rbl::json> file;
    if (config_json) {
      rbl::json parsed = rbl::json::parse(config_json, nullptr, false);
      if (parsed.is_discarded()) {
        if (errors) *errors = copy_string("config: not valid JSON");
        rbl::fail(rbl::ErrorCode::Config, "config: not valid JSON");
      }
      file = std::move(parsed);
    }
    std::vector<std::string> sets;
    for (size_t i = 0; i < n_overrides; ++i) {
      need(overrides[i], "override");
      sets.emplace_back(overrides[i]);
    }
    const rbl::ResolvedConfig r = rbl::resolve_config(subcommand, check ? check : "", file, sets);
    *resolved_json = copy_string(r.config.dump(2));
    if (!r.ok()) {
      std::string text;
      for (const auto& e : r.errors) text += e + "\n";
      if (errors) *errors = copy_string(text);
      rbl::fail(rbl::ErrorCode::Config, r.errors.size() == 1
                                            ? r.errors.front()
                                            : std::to_string(r.errors.size()) + " config errors");
    }
  });
}

rbl_status rbl_run(const char* subcommand, const char* check, const char* resolved_json,
                   size_t jobs, char** summary_json) {
  if (summary_json) *summary_json = nullptr;
  bool pass = true;
  const rbl_status st = guarded([&] {
    need(subcommand, "subcommand");
    need(resolved_json, "resolved_json");
    const std::string sub = subcommand;
    const std::string chk = check ? check : "";
    // Re-validate: the caller may hand in an edited config.
    const rbl::ResolvedConfig r =
        rbl::resolve_config(sub, chk, rbl::json::parse(resolved_json, nullptr, false), {});
    if (!r.ok()) rbl::fail(rbl::ErrorCode::Config, r.errors.front());
    const rbl::RunSummary s = rbl::run_experiment(sub, chk, r.config, jobs == 0 ? 1 : jobs);
    pass = s.pass;
    if (summary_json) {
      rbl::json j = {{"pass", s.pass}, {"checks", s.checks}, {"files", s.files},
                     {"output_dir", r.config.at("output_dir")}};
      *summary_json = copy_string(j.dump(2));
    }
  });
  if (st == RBL_OK && !pass) {
    last_error = "verification failed";
    return RBL_VERIFICATION_FAILED;
  }
  return st;
}

void rbl_string_free(char* s) { std::free(s); }

}  // extern "C"
