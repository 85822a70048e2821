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
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rbl/harness.hpp"

namespace rbl {

using nlohmann::json;

extern const char* const kVersion;

/// Subcommands and the checks `verify` accepts.
const std::vector<std::string>& subcommand_names();
const std::vector<std::string>& check_names();

/// Fully populated configuration for a subcommand (and check, for verify).
/// `env_name` selects the environment whose builder params are filled in;
/// empty means the subcommand's default environment.
json default_config(const std::string& subcommand, const std::string& check,
                    const std::string& env_name = "");

struct ResolvedConfig {
  json config;                      // canonical, fully defaulted
  std::vector<std::string> errors;  // every violation found
  bool ok() const { return errors.empty(); }
};

/// Layers defaults, the optional file contents and KEY=VALUE overrides, then
/// validates the result. A run_meta.json file is accepted as config input.
/// Override keys are dotted paths; the prefixes `optim.` and `params.` are
/// short for `algorithm.optim.` and `env.params.`. Values parse as JSON when
/// they can and as strings otherwise.
ResolvedConfig resolve_config(const std::string& subcommand, const std::string& check,
                              const std::optional<json>& file_config,
                              const std::vector<std::string>& overrides);

struct RunSummary {
  bool pass = true;
  json checks = json::object();   // name -> {pass, statistics}
  std::vector<std::string> files;  // written, relative to output_dir
};

/// Runs a validated configuration and writes its outputs into
/// config["output_dir"]. `jobs` only changes wall time.
RunSummary run_experiment(const std::string& subcommand, const std::string& check,
                          const json& config, std::size_t jobs);

// Output schemas --------------------------------------------------------------

/// bias_report.csv: seed, env, algorithm, buffer_size, j_true, j_hat,
/// reuse_error (plus j_true_std_error when J is estimated by rollouts).
std::string bias_report_csv(const std::vector<BiasReport>& reports);

/// summary.csv: env, algorithm, buffer_size, mean_reuse_error, std_error,
/// relative_reuse_bias, ci95_lo, ci95_hi.
std::string summary_csv(const std::vector<BiasReport>& reports);

json stability_json(const StabilityReport& report);

/// RFC-4180 field quoting and 17 significant digits.
std::string csv_field(const std::string& value);
std::string csv_real(double value);

}  // namespace rbl
