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

// reuse-bias-lab: command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rbl/rbl.h"

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string check;
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::size_t> jobs;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> master_seed;
  bool print_config = false;
  // Shorthands for common keys.
  std::optional<std::size_t> seeds, n, num_actions, side, steps, hypotheses;
  std::optional<double> M, eps, lr, alpha, delta;
  std::optional<std::string> m, env, algorithm;
};

std::string owned(char* s) {
  std::string out = s ? s : "";
  rbl_string_free(s);
  return out;
}

void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "JSON config file (a run_meta.json also works)");
  app->add_option("--set", o.sets, "Override KEY=VALUE (dotted key), repeatable");
  app->add_option("--jobs", o.jobs, "Worker threads (default: REUSE_BIAS_LAB_JOBS or all cores)");
  app->add_option("--output-dir", o.output_dir, "Output directory");
  app->add_option("--master-seed", o.master_seed, "Master seed");
  app->add_flag("--print-config", o.print_config, "Print the resolved config and exit");
  app->add_option("--seeds", o.seeds, "n_seeds");
  app->add_option("--m", o.m, "buffer_sizes, comma separated");
  app->add_option("--n", o.n, "env.params.n");
  app->add_option("--M", o.M, "env.params.M");
  app->add_option("--eps", o.eps, "env.params.eps");
  app->add_option("--num-actions", o.num_actions, "env.params.num_actions");
  app->add_option("--side", o.side, "env.params.side");
  app->add_option("--env", o.env, "env.name");
  app->add_option("--algorithm", o.algorithm, "algorithm.name");
  app->add_option("--lr", o.lr, "algorithm.optim.learning_rate");
  app->add_option("--steps", o.steps, "algorithm.optim.steps");
  app->add_option("--alpha", o.alpha, "algorithm.optim.biris_alpha");
  app->add_option("--hypotheses", o.hypotheses, "algorithm.hypotheses");
  app->add_option("--delta", o.delta, "delta");
}

template <class T>
void push(std::vector<std::string>& out, const char* key, const std::optional<T>& v) {
  if (!v) return;
  std::ostringstream os;
  os.precision(17);
  os << *v;
  out.push_back(std::string(key) + "=" + os.str());
}

void push_string(std::vector<std::string>& out, const char* key, const std::optional<std::string>& v) {
  if (!v) return;
  std::string quoted = "\"";
  for (char c : *v) {
    if (c == '"' || c == '\\') quoted += '\\';
    quoted += c;
  }
  out.push_back(std::string(key) + "=" + quoted + "\"");
}

std::vector<std::string> overrides(const Options& o) {
  std::vector<std::string> out;
  push(out, "n_seeds", o.seeds);
  if (o.m) out.push_back("buffer_sizes=[" + *o.m + "]");
  push_string(out, "env.name", o.env);
  push(out, "env.params.n", o.n);
  push(out, "env.params.M", o.M);
  push(out, "env.params.eps", o.eps);
  push(out, "env.params.num_actions", o.num_actions);
  push(out, "env.params.side", o.side);
  push_string(out, "algorithm.name", o.algorithm);
  push(out, "algorithm.optim.learning_rate", o.lr);
  push(out, "algorithm.optim.steps", o.steps);
  push(out, "algorithm.optim.biris_alpha", o.alpha);
  push(out, "algorithm.hypotheses", o.hypotheses);
  push(out, "delta", o.delta);
  push(out, "master_seed", o.master_seed);
  push_string(out, "output_dir", o.output_dir);
  out.insert(out.end(), o.sets.begin(), o.sets.end());
  return out;
}

std::size_t resolve_jobs(const Options& o) {
  if (o.jobs) return *o.jobs == 0 ? 1 : *o.jobs;
  if (const char* env = std::getenv("REUSE_BIAS_LAB_JOBS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
    std::cerr << "warning: ignoring REUSE_BIAS_LAB_JOBS=" << env << "\n";
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

int run(const std::string& subcommand, const Options& o) {
  std::optional<std::string> text;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) {
      std::cerr << "error: cannot read config file " << o.config_path << "\n";
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  const std::vector<std::string> sets = overrides(o);
  std::vector<const char*> argv;
  for (const auto& s : sets) argv.push_back(s.c_str());

  char* resolved_raw = nullptr;
  char* errors_raw = nullptr;
  const rbl_status st =
      rbl_config_resolve(subcommand.c_str(), o.check.c_str(), text ? text->c_str() : nullptr,
                         argv.data(), argv.size(), &resolved_raw, &errors_raw);
  const std::string resolved = owned(resolved_raw);
  const std::string errors = owned(errors_raw);
  if (st != RBL_OK) {
    std::cerr << "config error:\n";
    if (!errors.empty()) {
      std::istringstream lines(errors);
      for (std::string line; std::getline(lines, line);) std::cerr << "  " << line << "\n";
    } else {
      std::cerr << "  " << rbl_last_error() << "\n";
    }
    return kExitConfig;
  }
  if (o.print_config) {
    std::cout << resolved << "\n";
    return 0;
  }

  char* summary_raw = nullptr;
  const rbl_status rs = rbl_run(subcommand.c_str(), o.check.c_str(), resolved.c_str(),
                                resolve_jobs(o), &summary_raw);
  const std::string summary = owned(summary_raw);
  if (!summary.empty()) std::cout << summary << "\n";
  switch (rs) {
    case RBL_OK:
      return 0;
    case RBL_VERIFICATION_FAILED:
      std::cerr << "verification failed\n";
      return kExitFailed;
    case RBL_CONFIG_ERROR:
    case RBL_INVALID_ARGUMENT:
    case RBL_ENUMERATION_CAP_EXCEEDED:
      std::cerr << "error: " << rbl_last_error() << "\n";
      return kExitConfig;
    default:
      std::cerr << "error (" << rbl_status_name(rs) << "): " << rbl_last_error() << "\n";
      return kExitFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reuse bias experiments for off-policy evaluation"};
  app.set_version_flag("--version", std::string(rbl_version()));
  app.require_subcommand(1);

  Options o;
  CLI::App* measure = app.add_subcommand("measure-bias", "Measure reuse bias of an algorithm");
  CLI::App* verify = app.add_subcommand("verify", "Run a named check");
  verify->add_option("check", o.check, "thm1 | thm2 | thm3 | thm4-coverage | appendix-c | stability")
      ->required();
  CLI::App* bounds = app.add_subcommand("bounds", "Evaluate the bound formulas on given inputs");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  for (CLI::App* sub : {measure, verify, bounds, gradcheck}) add_common(sub, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return run(app.get_subcommands().front()->get_name(), o);
}
