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

/* Plain C client of the shared library. */

#include <math.h>
#include <stdio.h>
#include <string.h>

#include "rbl/rbl.h"

static int failures = 0;

#define CHECK(cond)                                              \
  do {                                                           \
    if (!(cond)) {                                               \
      fprintf(stderr, "%s:%d: check failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                \
    }                                                            \
  } while (0)

int main(void) {
  rbl_mdp* chain = NULL;
  rbl_policy* uniform = NULL;
  rbl_policy* trained = NULL;
  rbl_buffer* buffer = NULL;
  double v = 0.0, j = 0.0;
  char* resolved = NULL;
  char* errors = NULL;
  char* summary = NULL;
  const char* bad_sets[] = {"n_seeds=0"};
  const double logits[] = {0.0, 0.0};

  CHECK(strlen(rbl_version()) > 0);
  CHECK(rbl_mdp_chain(3, 0.9, 4, &chain) == RBL_OK);
  CHECK(rbl_mdp_num_states(chain) == 3 && rbl_mdp_num_actions(chain) == 2);
  CHECK(rbl_policy_uniform(chain, &uniform) == RBL_OK);
  CHECK(rbl_policy_prob(uniform, 0, 1, &v) == RBL_OK && v == 0.5);
  CHECK(rbl_policy_prob(uniform, 9, 1, &v) == RBL_INVALID_ARGUMENT);
  CHECK(strlen(rbl_last_error()) > 0);

  /* uniform on the chain: first reach the goal in 2 steps w.p. 1/4 (RR),
   * 3 steps 1/8 (LRR), 4 steps 2/16 (LLRR, RLRR); reward on the last step */
  CHECK(rbl_exact_return(chain, uniform, &j) == RBL_OK);
  CHECK(fabs(j - (0.25 * 0.9 + 0.125 * 0.81 + 0.125 * 0.729)) < 1e-15);

  CHECK(rbl_buffer_sample(chain, uniform, 10, 42, &buffer) == RBL_OK);
  CHECK(rbl_buffer_size(buffer) == 10);
  CHECK(rbl_epsilon2_loss(buffer, uniform, &v) == RBL_OK && v == 0.0);
  CHECK(rbl_is_estimate(buffer, uniform, &v) == RBL_OK);
  CHECK(rbl_wis_estimate(buffer, uniform, &j) == RBL_OK && fabs(v - j) < 1e-15);
  CHECK(rbl_train_pg(buffer, uniform, 0.1, 20, 0.05, RBL_OBJECTIVE_WIS, &trained) == RBL_OK);
  CHECK(rbl_is_estimate(buffer, trained, &j) == RBL_OK);

  CHECK(rbl_product_ratio_bound(0.1, 10, &v) == RBL_OK && fabs(v - 1.5937424601) < 1e-12);
  CHECK(rbl_reuse_error_bound(0.0, 0.0, 1, 0.05, &v) == RBL_INVALID_ARGUMENT);
  CHECK(rbl_sac_ratio(0.0, -1.0, -5.0, &v) == RBL_OK && fabs(v - exp(1.0)) < 1e-15);
  CHECK(rbl_policy_softmax(1, 2, logits, NULL) == RBL_INVALID_ARGUMENT);

  CHECK(rbl_config_resolve("measure-bias", NULL, "{", NULL, 0, &resolved, &errors) ==
        RBL_CONFIG_ERROR);
  rbl_string_free(resolved);
  rbl_string_free(errors);
  CHECK(rbl_config_resolve("measure-bias", NULL, NULL, bad_sets, 1, &resolved, &errors) ==
        RBL_CONFIG_ERROR);
  CHECK(errors != NULL && strstr(errors, "n_seeds") != NULL);
  rbl_string_free(resolved);
  rbl_string_free(errors);

  CHECK(rbl_run("verify", "thm3", "[]", 1, &summary) == RBL_CONFIG_ERROR);
  rbl_string_free(summary);

  rbl_policy_destroy(trained);
  rbl_buffer_destroy(buffer);
  rbl_policy_destroy(uniform);
  rbl_mdp_destroy(chain);
  if (failures) fprintf(stderr, "%d failure(s)\n", failures);
  return failures ? 1 : 0;
}
