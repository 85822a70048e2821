/* Copyright 2026 The reuse-bias-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef RBL_H_
#define RBL_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RBL_API __declspec(dllexport)
#else
#define RBL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rbl_status {
  RBL_OK = 0,
  RBL_INVALID_ARGUMENT = 1,
  RBL_ZERO_BEHAVIOR_PROBABILITY = 2,
  RBL_ENUMERATION_CAP_EXCEEDED = 3,
  RBL_ALL_ACTIONS_SAMPLED = 4,
  RBL_ALL_WEIGHTS_ZERO = 5,
  RBL_NON_FINITE_GRADIENT = 6,
  RBL_CONFIG_ERROR = 7,
  RBL_IO_ERROR = 8,
  RBL_VERIFICATION_FAILED = 9,
  RBL_INTERNAL_ERROR = 10
} rbl_status;

typedef struct rbl_mdp rbl_mdp;
typedef struct rbl_policy rbl_policy;
typedef struct rbl_buffer rbl_buffer;

typedef enum rbl_objective { RBL_OBJECTIVE_IS = 0, RBL_OBJECTIVE_WIS = 1 } rbl_objective;

RBL_API const char* rbl_version(void);
RBL_API const char* rbl_status_name(rbl_status status);
/* Message of the last failed call on this thread; "" if none. */
RBL_API const char* rbl_last_error(void);

/* Environments */
RBL_API rbl_status rbl_mdp_gridworld(size_t side, int random_start, rbl_mdp** out);
RBL_API rbl_status rbl_mdp_chain(size_t num_states, double gamma, size_t horizon, rbl_mdp** out);
RBL_API rbl_status rbl_mdp_theorem3(size_t n, double M, double eps, rbl_mdp** out);
RBL_API rbl_status rbl_mdp_zeroing(size_t num_actions, rbl_mdp** out);
RBL_API void rbl_mdp_destroy(rbl_mdp* mdp);
RBL_API size_t rbl_mdp_num_states(const rbl_mdp* mdp);
RBL_API size_t rbl_mdp_num_actions(const rbl_mdp* mdp);

/* Policies. `logits` is row-major, num_states x num_actions. */
RBL_API rbl_status rbl_policy_uniform(const rbl_mdp* mdp, rbl_policy** out);
RBL_API rbl_status rbl_policy_softmax(size_t num_states, size_t num_actions, const double* logits,
                                      rbl_policy** out);
RBL_API void rbl_policy_destroy(rbl_policy* policy);
RBL_API rbl_status rbl_policy_prob(const rbl_policy* policy, size_t state, size_t action,
                                   double* out);

/* Evaluation */
RBL_API rbl_status rbl_exact_return(const rbl_mdp* mdp, const rbl_policy* policy, double* out);
RBL_API rbl_status rbl_buffer_sample(const rbl_mdp* mdp, const rbl_policy* behavior, size_t m,
                                     uint64_t seed, rbl_buffer** out);
RBL_API void rbl_buffer_destroy(rbl_buffer* buffer);
RBL_API size_t rbl_buffer_size(const rbl_buffer* buffer);
RBL_API rbl_status rbl_is_estimate(const rbl_buffer* buffer, const rbl_policy* target, double* out);
RBL_API rbl_status rbl_wis_estimate(const rbl_buffer* buffer, const rbl_policy* target, double* out);
RBL_API rbl_status rbl_epsilon2_loss(const rbl_buffer* buffer, const rbl_policy* target,
                                     double* out);

/* Bounds and ratios */
RBL_API rbl_status rbl_reuse_error_bound(double eps1, double eps2, size_t m, double delta,
                                         double* out);
RBL_API rbl_status rbl_finite_hypothesis_bound(size_t m, size_t h_size, double delta,
                                               double rho_max, double* out);
RBL_API rbl_status rbl_product_ratio_bound(double eps, size_t T, double* out);
RBL_API rbl_status rbl_sac_ratio(double log_p_target, double log_p_behavior, double beta_clip,
                                 double* out);
RBL_API rbl_status rbl_gaussian_ratio(const double* action, const double* mean_target,
                                      const double* mean_behavior, size_t dim, double scale,
                                      double* out);

/* Full-batch policy gradient from a softmax `init`. */
RBL_API rbl_status rbl_train_pg(const rbl_buffer* buffer, const rbl_policy* init,
                                double learning_rate, size_t steps, double biris_alpha,
                                rbl_objective objective, rbl_policy** out);

/* Experiments. `config_json` may be NULL. On RBL_CONFIG_ERROR `*errors`
 * holds one violation per line. Returned strings are released with
 * rbl_string_free. */
RBL_API rbl_status rbl_config_resolve(const char* subcommand, const char* check,
                                      const char* config_json, const char* const* overrides,
                                      size_t n_overrides, char** resolved_json, char** errors);
/* Runs a resolved config. RBL_VERIFICATION_FAILED when a check fails; the
 * summary (JSON) is still produced. */
RBL_API rbl_status rbl_run(const char* subcommand, const char* check, const char* resolved_json,
                           size_t jobs, char** summary_json);
RBL_API void rbl_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* RBL_H_ */
