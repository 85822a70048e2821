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

#include "rbl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rbl/error.hpp"
#include "rbl/estimators.hpp"
#include "rbl/optim.hpp"

#ifndef RBL_VERSION
#define RBL_VERSION "0.0.0"
#endif

namespace rbl {

const char* const kVersion = RBL_VERSION;

namespace {

namespace fs = std::filesystem;

constexpr const char* kBirisComparison = "biris-comparison";

const std::vector<std::string> kEnvNames = {"gridworld", "chain", "theorem3", "zeroing"};

json env_params(const std::string& name) {
  if (name == "chain") return {{"num_states", 3}, {"gamma", 0.9}, {"horizon", 4}};
  if (name == "theorem3") return {{"n", 2}, {"M", 1.0}, {"eps", 0.5}};
  if (name == "zeroing") return {{"num_actions", 10}};
  return {{"side", 5}, {"random_start", false}};
}

json optim_json(double lr, std::size_t steps) {
  return {{"learning_rate", lr},
          {"steps", steps},
          {"biris_alpha", 0.05},
          {"lr_schedule", "constant"}};
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

bool contains(const std::vector<std::string>& items, const std::string& s) {
  return std::find(items.begin(), items.end(), s) != items.end();
}

// Default environment per subcommand/check.
std::string default_env(const std::string& subcommand, const std::string& check) {
  if (subcommand == "gradcheck") return "chain";
  if (check == "thm1" || check == "thm4-coverage" || check == "stability") return "chain";
  if (check == "thm3") return "theorem3";
  if (check == "appendix-c") return "zeroing";
  return "gridworld";
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"measure-bias", "verify", "bounds", "gradcheck"};
  return names;
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = {"thm1",          "thm2",       "thm3",
                                                 "thm4-coverage", "appendix-c", "stability"};
  return names;
}

json default_config(const std::string& subcommand, const std::string& check,
                    const std::string& env_name) {
  if (subcommand == "bounds") {
    return {{"output_dir", "out"},
            {"bounds",
             {{"reuse_error", {{"eps1", 0.0}, {"eps2", 0.0}, {"m", 100}, {"delta", 0.05}}},
              {"finite_hypothesis",
               {{"m", 100}, {"h_size", 8}, {"delta", 0.05}, {"rho_max", 1.0}}},
              {"product_ratio", {{"eps", 0.1}, {"T", 10}}},
              {"sac_ratio", {{"log_p_target", 0.0}, {"log_p_behavior", 0.0}, {"beta_clip", -5.0}}},
              {"gaussian_ratio",
               {{"action", {0.0}}, {"mean_target", {0.0}}, {"mean_behavior", {0.0}},
                {"scale", 1.0}}}}}};
  }
  const std::string env = env_name.empty() ? default_env(subcommand, check) : env_name;
  json c = {{"env", {{"name", env}, {"params", env_params(env)}}},
            {"behavior", {{"kind", "uniform"}, {"path", ""}}},
            {"master_seed", 0},
            {"output_dir", "out"}};
  if (subcommand == "gradcheck") {
    c["buffer_sizes"] = {10};
    c["n_seeds"] = 100;
    c["gradcheck"] = {{"h", 1e-5},
                      {"coords", 16},
                      {"logit_scale", 1.0},
                      {"penalty_margin", 0.1},
                      {"tolerance_smooth", 1e-5},
                      {"tolerance_penalty", 1e-4}};
    return c;
  }
  c["j_true_mode"] = "exact";
  c["mc_rollouts"] = 4000;
  json algorithm = {{"name", "pg-is"}, {"hypotheses", 8}, {"optim", optim_json(1e-2, 500)}};
  c["buffer_sizes"] = {30};
  c["n_seeds"] = 50;
  if (subcommand == "verify") {
    if (check == "thm1") {
      algorithm["name"] = "argmax";
      c["buffer_sizes"] = {10};
      c["n_seeds"] = 10000;
    } else if (check == "thm2") {
      if (env_name.empty()) c["env"]["params"]["side"] = 3;
      algorithm["name"] = "one-step-pg";
      algorithm["optim"]["learning_rate"] = 1e-3;
      c["buffer_sizes"] = {10};
      c["n_seeds"] = 10000;
    } else if (check == "thm3") {
      c.erase("buffer_sizes");
      c["n_seeds"] = 100000;
      algorithm = nullptr;
    } else if (check == "appendix-c") {
      if (env_name.empty()) c["env"]["params"]["num_actions"] = 1000;
      c["buffer_sizes"] = {1, 10, 100};
      c["n_seeds"] = 1000;
      algorithm = nullptr;
    } else if (check == "thm4-coverage") {
      c["buffer_sizes"] = {20};
      c["n_seeds"] = 1000;
      c["delta"] = 0.05;
    } else if (check == "stability") {
      algorithm["name"] = "stochastic-pg";
      algorithm["optim"] = optim_json(0.1, 50);
      c["buffer_sizes"] = {10};
      c["n_seeds"] = 10000;
      c["probe"] = {{"n_algo_seeds", 500}, {"n_buffer_pairs", 100}};
    }
  }
  if (!algorithm.is_null()) c["algorithm"] = algorithm;
  return c;
}

// Resolution ------------------------------------------------------------------

namespace {

void unknown_keys(const json& user, const json& reference, const std::string& prefix,
                  std::vector<std::string>& errors) {
  if (!user.is_object() || !reference.is_object()) return;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key())) {
      errors.push_back(path + ": unknown key");
    } else if (it.value().is_object()) {
      unknown_keys(it.value(), reference.at(it.key()), path, errors);
    }
  }
}

std::string expand_alias(const std::string& key) {
  if (key.rfind("optim.", 0) == 0) return "algorithm." + key;
  if (key.rfind("params.", 0) == 0) return "env." + key;
  return key;
}

// Field checks that append to an error list instead of throwing.
class Checker {
 public:
  Checker(const json& root, std::vector<std::string>& errors) : root_(root), errors_(errors) {}

  const json* find(const std::string& path) {
    const json* node = &root_;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (!node->is_object() || !node->contains(part)) {
        errors_.push_back(path + ": missing");
        return nullptr;
      }
      node = &node->at(part);
    }
    return node;
  }

  std::optional<double> real(const std::string& path, double lo, double hi, bool lo_open = false,
                             bool hi_open = false) {
    const json* v = find(path);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      errors_.push_back(path + ": expected a number");
      return std::nullopt;
    }
    const double x = v->get<double>();
    const bool below = lo_open ? !(x > lo) : !(x >= lo);
    const bool above = hi_open ? !(x < hi) : !(x <= hi);
    if (below || above) {
      errors_.push_back(path + ": must be in " + std::string(lo_open ? "(" : "[") + fmt(lo) + ", " +
                        fmt(hi) + (hi_open ? ")" : "]"));
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::uint64_t> integer(const std::string& path, std::uint64_t lo,
                                       std::uint64_t hi = UINT64_MAX) {
    const json* v = find(path);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() &&
                                    v->get<std::int64_t>() < 0)) {
      errors_.push_back(path + ": expected a non-negative integer");
      return std::nullopt;
    }
    const auto x = v->get<std::uint64_t>();
    if (x < lo || x > hi) {
      errors_.push_back(path + ": must be >= " + std::to_string(lo) +
                        (hi == UINT64_MAX ? "" : " and <= " + std::to_string(hi)));
      return std::nullopt;
    }
    return x;
  }

  std::optional<std::string> choice(const std::string& path, const std::vector<std::string>& valid) {
    const json* v = find(path);
    if (!v) return std::nullopt;
    if (!v->is_string() || !contains(valid, v->get<std::string>())) {
      errors_.push_back(path + ": unknown value " + v->dump() + "; valid values: " + join(valid));
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  void boolean(const std::string& path) {
    const json* v = find(path);
    if (v && !v->is_boolean()) errors_.push_back(path + ": expected true or false");
  }

  std::optional<std::vector<std::size_t>> sizes(const std::string& path, std::size_t lo) {
    const json* v = find(path);
    if (!v) return std::nullopt;
    if (!v->is_array() || v->empty()) {
      errors_.push_back(path + ": expected a non-empty list of integers");
      return std::nullopt;
    }
    std::vector<std::size_t> out;
    for (const json& e : *v) {
      if (!e.is_number_integer() || e.get<std::int64_t>() < static_cast<std::int64_t>(lo)) {
        errors_.push_back(path + ": every entry must be an integer >= " + std::to_string(lo));
        return std::nullopt;
      }
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  void real_list(const std::string& path) {
    const json* v = find(path);
    if (!v) return;
    if (!v->is_array() || v->empty() ||
        !std::all_of(v->begin(), v->end(), [](const json& e) { return e.is_number(); }))
      errors_.push_back(path + ": expected a non-empty list of numbers");
  }

  void error(const std::string& msg) { errors_.push_back(msg); }

 private:
  static std::string fmt(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << x;
    return os.str();
  }

  const json& root_;
  std::vector<std::string>& errors_;
};

void validate(const std::string& subcommand, const std::string& check, const json& c,
              std::vector<std::string>& errors) {
  Checker k(c, errors);
  const double inf = INFINITY;
  if (auto* out = k.find("output_dir"); out && (!out->is_string() || out->get<std::string>().empty()))
    k.error("output_dir: expected a non-empty path");

  if (subcommand == "bounds") {
    k.real("bounds.reuse_error.eps1", 0.0, inf);
    k.real("bounds.reuse_error.eps2", 0.0, inf);
    k.integer("bounds.reuse_error.m", 2);
    k.real("bounds.reuse_error.delta", 0.0, 1.0, true, true);
    k.integer("bounds.finite_hypothesis.m", 1);
    k.integer("bounds.finite_hypothesis.h_size", 1);
    k.real("bounds.finite_hypothesis.delta", 0.0, 1.0, true, true);
    k.real("bounds.finite_hypothesis.rho_max", 0.0, inf);
    k.real("bounds.product_ratio.eps", 0.0, 1.0, false, true);
    k.integer("bounds.product_ratio.T", 0);
    k.real("bounds.sac_ratio.log_p_target", -inf, inf);
    k.real("bounds.sac_ratio.log_p_behavior", -inf, inf);
    k.real("bounds.sac_ratio.beta_clip", -inf, 0.0);
    k.real_list("bounds.gaussian_ratio.action");
    k.real_list("bounds.gaussian_ratio.mean_target");
    k.real_list("bounds.gaussian_ratio.mean_behavior");
    k.real("bounds.gaussian_ratio.scale", 0.0, inf, true);
    const json* g = k.find("bounds.gaussian_ratio");
    if (g && g->is_object() && g->contains("action") && g->contains("mean_target") &&
        g->contains("mean_behavior") && g->at("action").is_array() &&
        (g->at("action").size() != g->at("mean_target").size() ||
         g->at("action").size() != g->at("mean_behavior").size()))
      k.error("bounds.gaussian_ratio: action and means must have the same length");
    return;
  }

  k.integer("master_seed", 0);
  k.integer("n_seeds", 1);
  const auto env = k.choice("env.name", kEnvNames);
  std::optional<std::uint64_t> num_actions;
  if (env == "gridworld") {
    k.integer("env.params.side", 2, 64);
    k.boolean("env.params.random_start");
  } else if (env == "chain") {
    k.integer("env.params.num_states", 2, 1024);
    k.real("env.params.gamma", 0.0, 1.0, true);
    k.integer("env.params.horizon", 1, 1000000);
  } else if (env == "theorem3") {
    k.integer("env.params.n", 1, 1000);
    k.real("env.params.M", 1.0, 1e6);
    k.real("env.params.eps", 0.0, 1.0, true, true);
  } else if (env == "zeroing") {
    num_actions = k.integer("env.params.num_actions", 2, 1000000);
  }

  if (const auto kind = k.choice("behavior.kind", {"uniform", "logits_file"}); kind == "logits_file") {
    const json* path = k.find("behavior.path");
    if (path && (!path->is_string() || !fs::is_regular_file(path->get<std::string>())))
      k.error("behavior.path: file not found: " + (path->is_string() ? path->get<std::string>() : path->dump()));
  }

  std::optional<std::vector<std::size_t>> sizes;
  if (c.contains("buffer_sizes")) sizes = k.sizes("buffer_sizes", check == "thm4-coverage" ? 2 : 1);

  if (subcommand == "gradcheck") {
    k.real("gradcheck.h", 0.0, 1.0, true);
    k.integer("gradcheck.coords", 1);
    k.real("gradcheck.logit_scale", 0.0, inf);
    k.real("gradcheck.penalty_margin", 0.0, inf);
    k.real("gradcheck.tolerance_smooth", 0.0, inf, true);
    k.real("gradcheck.tolerance_penalty", 0.0, inf, true);
    return;
  }

  k.choice("j_true_mode", {"exact", "mc"});
  k.integer("mc_rollouts", 2);

  if (c.contains("algorithm")) {
    std::vector<std::string> valid = algorithm_names();
    if (subcommand == "measure-bias") valid.push_back(kBirisComparison);
    const auto name = k.choice("algorithm.name", valid);
    const char* fixed = check == "thm1"        ? "argmax"
                        : check == "thm2"      ? "one-step-pg"
                        : check == "stability" ? "stochastic-pg"
                                               : nullptr;
    if (name && fixed && *name != fixed)
      k.error("algorithm.name: check " + check + " runs " + fixed);
    if (name == "zeroing" && env != "zeroing")
      k.error("algorithm.name: zeroing needs env.name zeroing");
    if (name == "theorem3-oracle" && env != "theorem3")
      k.error("algorithm.name: theorem3-oracle needs env.name theorem3");
    k.integer("algorithm.hypotheses", 1);
    k.real("algorithm.optim.learning_rate", 0.0, inf);
    k.integer("algorithm.optim.steps", 0);
    k.real("algorithm.optim.biris_alpha", 0.0, inf);
    k.choice("algorithm.optim.lr_schedule", {"constant", "inverse"});
  }

  if (c.contains("delta")) k.real("delta", 0.0, 1.0, true, true);
  if (check == "stability") {
    k.integer("probe.n_algo_seeds", 1);
    k.integer("probe.n_buffer_pairs", 1);
  }
  if (check == "thm3" && env && env != "theorem3") k.error("env.name: thm3 needs theorem3");
  if (check == "appendix-c") {
    if (env && env != "zeroing") k.error("env.name: appendix-c needs zeroing");
    if (sizes && num_actions)
      for (std::size_t m : *sizes)
        if (m >= *num_actions) {
          k.error("buffer_sizes: every entry must be below env.params.num_actions");
          break;
        }
  }
}

}  // namespace

ResolvedConfig resolve_config(const std::string& subcommand, const std::string& check,
                              const std::optional<json>& file_config,
                              const std::vector<std::string>& overrides) {
  ResolvedConfig out;
  if (!contains(subcommand_names(), subcommand)) {
    out.errors.push_back("subcommand: unknown value \"" + subcommand +
                         "\"; valid values: " + join(subcommand_names()));
    return out;
  }
  if (subcommand == "verify" && !contains(check_names(), check)) {
    out.errors.push_back("check: unknown value \"" + check + "\"; valid values: " +
                         join(check_names()));
    return out;
  }

  json user = json::object();
  if (file_config) {
    if (!file_config->is_object()) {
      out.errors.push_back("config: expected a JSON object");
    } else if (file_config->contains("config") && file_config->contains("versions")) {
      user = file_config->at("config");
    } else {
      user = *file_config;
    }
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      out.errors.push_back("--set " + o + ": expected KEY=VALUE");
      continue;
    }
    const std::string key = expand_alias(o.substr(0, eq));
    const std::string text = o.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &user;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      json& next = (*node)[parts[i]];
      if (!next.is_object()) next = json::object();
      node = &next;
    }
    (*node)[parts.back()] = value;
  }

  std::string env_name;
  if (user.contains("env") && user["env"].is_object() && user["env"].contains("name") &&
      user["env"]["name"].is_string() && contains(kEnvNames, user["env"]["name"].get<std::string>()))
    env_name = user["env"]["name"].get<std::string>();
  json resolved = default_config(subcommand, check, env_name);
  unknown_keys(user, resolved, "", out.errors);
  resolved.merge_patch(user);
  validate(subcommand, check, resolved, out.errors);
  out.config = std::move(resolved);
  return out;
}

// Output schemas --------------------------------------------------------------

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char ch : value) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string csv_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string bias_report_csv(const std::vector<BiasReport>& reports) {
  const bool mc = std::any_of(reports.begin(), reports.end(), [](const BiasReport& r) {
    return r.j_true_mode == JTrueMode::MonteCarlo;
  });
  std::string out = "seed,env,algorithm,buffer_size,j_true,j_hat,reuse_error";
  out += mc ? ",j_true_std_error\r\n" : "\r\n";
  for (const BiasReport& r : reports) {
    for (const SeedRecord& rec : r.records) {
      out += std::to_string(rec.seed) + ',' + csv_field(r.env) + ',' + csv_field(r.algorithm) + ',' +
             std::to_string(r.buffer_size) + ',' + csv_real(rec.j_true) + ',' +
             csv_real(rec.j_hat) + ',' + csv_real(rec.reuse_error);
      if (mc) out += ',' + csv_real(rec.j_true_std_error);
      out += "\r\n";
    }
  }
  return out;
}

std::string summary_csv(const std::vector<BiasReport>& reports) {
  std::string out =
      "env,algorithm,buffer_size,mean_reuse_error,std_error,relative_reuse_bias,ci95_lo,ci95_hi\r\n";
  for (const BiasReport& r : reports) {
    out += csv_field(r.env) + ',' + csv_field(r.algorithm) + ',' + std::to_string(r.buffer_size) +
           ',' + csv_real(r.reuse_error.mean) + ',' + csv_real(r.reuse_error.std_error) + ',' +
           csv_real(r.relative_reuse_bias) + ',' + csv_real(r.reuse_error.ci95.lo) + ',' +
           csv_real(r.reuse_error.ci95.hi) + "\r\n";
  }
  return out;
}

json stability_json(const StabilityReport& r) {
  return {{"empirical_beta", r.empirical_beta}, {"theorem6_beta", r.theorem6_beta},
          {"measured_M", r.measured_M},         {"measured_L1", r.measured_L1},
          {"measured_L2", r.measured_L2},       {"step_size_sum", r.step_size_sum},
          {"trajectories", r.trajectories},     {"buffer_pairs", r.buffer_pairs},
          {"algo_seeds", r.algo_seeds}};
}

// Running ---------------------------------------------------------------------

namespace {

EnvSpec env_spec(const json& env) {
  const json& p = env.at("params");
  EnvSpec spec;
  const std::string name = env.at("name");
  if (name == "gridworld") {
    spec.kind = EnvKind::Gridworld;
    spec.side = p.at("side");
    spec.random_start = p.at("random_start");
  } else if (name == "chain") {
    spec.kind = EnvKind::Chain;
    spec.chain_states = p.at("num_states");
    spec.chain_gamma = p.at("gamma");
    spec.chain_horizon = p.at("horizon");
  } else if (name == "theorem3") {
    spec.kind = EnvKind::Theorem3;
    spec.t3_n = p.at("n");
    spec.t3_M = p.at("M");
    spec.t3_eps = p.at("eps");
  } else {
    spec.kind = EnvKind::Zeroing;
    spec.num_actions = p.at("num_actions");
  }
  return spec;
}

std::optional<Table> behavior_logits(const json& behavior) {
  if (behavior.at("kind") != "logits_file") return std::nullopt;
  const std::string path = behavior.at("path");
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Config, "behavior.path: cannot read " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_object() && doc.contains("logits")) doc = doc["logits"];
  if (!doc.is_array() || doc.empty() || !doc[0].is_array())
    fail(ErrorCode::Config, "behavior.path: expected a JSON list of logit rows");
  Table t(doc.size(), doc[0].size());
  for (std::size_t s = 0; s < doc.size(); ++s) {
    if (!doc[s].is_array() || doc[s].size() != t.cols())
      fail(ErrorCode::Config, "behavior.path: logit rows must all have the same length");
    for (std::size_t a = 0; a < t.cols(); ++a) {
      if (!doc[s][a].is_number()) fail(ErrorCode::Config, "behavior.path: non-numeric logit");
      t(s, a) = doc[s][a].get<double>();
    }
  }
  return t;
}

OptimConfig optim_config(const json& o) {
  OptimConfig c;
  c.learning_rate = o.at("learning_rate");
  c.steps = o.at("steps");
  c.biris_alpha = o.at("biris_alpha");
  c.lr_schedule = o.at("lr_schedule") == "inverse" ? LrSchedule::InverseDecay : LrSchedule::Constant;
  return c;
}

AlgorithmSpec algorithm_spec(const json& a, const std::string& name) {
  AlgorithmSpec spec;
  spec.kind = *algorithm_from_string(name);
  spec.optim = optim_config(a.at("optim"));
  spec.hypotheses = a.at("hypotheses");
  return spec;
}

RunOptions run_options(const json& c, std::size_t jobs) {
  RunOptions o;
  o.master_seed = c.at("master_seed");
  o.jobs = jobs;
  if (c.contains("j_true_mode"))
    o.j_true_mode = c["j_true_mode"] == "mc" ? JTrueMode::MonteCarlo : JTrueMode::Exact;
  if (c.contains("mc_rollouts")) o.mc_rollouts = c["mc_rollouts"];
  return o;
}

void write_file(const fs::path& dir, const std::string& name, const std::string& content,
                RunSummary& summary) {
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + (dir / name).string());
  out << content;
  if (!out) fail(ErrorCode::Io, "write failed: " + (dir / name).string());
  summary.files.push_back(name);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json check_entry(const CheckResult& r) {
  return {{"pass", r.pass}, {"statistics", r.statistics}};
}

CheckResult gradcheck(const json& c, const RunOptions& options) {
  const ExperimentSetup setup = make_setup(env_spec(c.at("env")), behavior_logits(c.at("behavior")));
  const json& g = c.at("gradcheck");
  const std::size_t m = c.at("buffer_sizes")[0];
  const std::size_t n = c.at("n_seeds");
  const double h = g.at("h");
  const std::size_t coords = g.at("coords");
  const double scale = g.at("logit_scale");
  const double margin = g.at("penalty_margin");
  const GradientTarget targets[] = {GradientTarget::IS, GradientTarget::WIS,
                                    GradientTarget::BirisPenalty};
  // err[t][i] < 0 marks a configuration skipped for that target.
  std::vector<std::vector<double>> err(3, std::vector<double>(n, -1.0));
  parallel_for(n, options.jobs, [&](std::size_t i) {
    Rng rng(options.master_seed, "gradcheck", i);
    const ReplayBuffer buffer = sample_buffer(setup.env.mdp, setup.behavior, m, rng);
    Table logits(setup.env.mdp.num_states(), setup.env.mdp.num_actions());
    for (double& v : logits.data()) v = scale * rng.normal();
    const TabularSoftmaxPolicy policy(std::move(logits));
    const std::vector<double> w = importance_weights(buffer, policy);
    const bool smooth_penalty = std::all_of(
        w.begin(), w.end(), [&](double x) { return std::abs(1.0 - x) > margin; });
    for (std::size_t t = 0; t < 3; ++t) {
      if (targets[t] == GradientTarget::BirisPenalty && !smooth_penalty) continue;
      err[t][i] = finite_diff_check(buffer, policy, targets[t], h, rng, coords);
    }
  });
  CheckResult out;
  out.name = "gradcheck";
  out.pass = true;
  for (std::size_t t = 0; t < 3; ++t) {
    const double tol = targets[t] == GradientTarget::BirisPenalty ? g.at("tolerance_penalty")
                                                                  : g.at("tolerance_smooth");
    double worst = 0.0;
    std::size_t checked = 0;
    for (double e : err[t]) {
      if (e < 0.0) continue;
      ++checked;
      worst = std::max(worst, e);
    }
    const bool pass = worst < tol && checked > 0;
    out.pass = out.pass && pass;
    out.statistics[std::string(to_string(targets[t]))] = {
        {"max_rel_err", worst}, {"checked", checked}, {"skipped", n - checked},
        {"tolerance", tol},     {"pass", pass}};
  }
  return out;
}

json bounds_json(const json& b) {
  const json& re = b.at("reuse_error");
  const json& fh = b.at("finite_hypothesis");
  const json& pr = b.at("product_ratio");
  const json& sac = b.at("sac_ratio");
  const json& gr = b.at("gaussian_ratio");
  const auto vec = [](const json& j) { return j.get<std::vector<double>>(); };
  const std::vector<double> a = vec(gr.at("action")), mt = vec(gr.at("mean_target")),
                            mb = vec(gr.at("mean_behavior"));
  return {
      {"reuse_error_bound",
       reuse_error_bound({re.at("eps1"), re.at("eps2"), re.at("m"), re.at("delta")})},
      {"finite_hypothesis_bound",
       finite_hypothesis_bound(fh.at("m"), fh.at("h_size"), fh.at("delta"), fh.at("rho_max"))},
      {"product_ratio_bound", product_ratio_bound(pr.at("eps"), pr.at("T"))},
      {"sac_ratio", sac_ratio(sac.at("log_p_target"), sac.at("log_p_behavior"), sac.at("beta_clip"))},
      {"gaussian_ratio", gaussian_ratio(a, mt, mb, gr.at("scale"))},
  };
}

}  // namespace

RunSummary run_experiment(const std::string& subcommand, const std::string& check,
                          const json& config, std::size_t jobs) {
  RunSummary summary;
  const fs::path dir = config.at("output_dir").get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<BiasReport> reports;
  std::optional<StabilityReport> stability;
  std::vector<CheckResult> checks;

  if (subcommand == "bounds") {
    write_file(dir, "bounds.json", dump(bounds_json(config.at("bounds"))), summary);
  } else {
    const RunOptions options = run_options(config, jobs);
    if (subcommand == "gradcheck") {
      checks.push_back(gradcheck(config, options));
    } else {
      const ExperimentSetup setup =
          make_setup(env_spec(config.at("env")), behavior_logits(config.at("behavior")));
      const std::size_t n = config.at("n_seeds");
      if (subcommand == "measure-bias") {
        const json& a = config.at("algorithm");
        const std::string name = a.at("name");
        const auto sizes = config.at("buffer_sizes").get<std::vector<std::size_t>>();
        if (name == kBirisComparison) {
          std::vector<AlgorithmSpec> algs;
          for (const char* k : {"pg-is", "pg-wis", "pg-is-biris", "pg-wis-biris"})
            algs.push_back(algorithm_spec(a, k));
          reports = biris_comparison(setup, sizes, algs, n, options);
        } else {
          for (std::size_t m : sizes)
            reports.push_back(measure_reuse_bias(setup, algorithm_spec(a, name), m, n, options));
        }
      } else if (check == "thm1") {
        checks.push_back(verify_overestimation_argmax(setup, config["algorithm"]["hypotheses"],
                                                      config["buffer_sizes"][0], n, options));
      } else if (check == "thm2") {
        checks.push_back(verify_one_step_pg(setup,
                                            config["algorithm"]["optim"]["learning_rate"],
                                            config["buffer_sizes"][0], n, options));
      } else if (check == "thm3") {
        const json& p = config["env"]["params"];
        checks.push_back(verify_theorem3(p["n"], p["M"], p["eps"], n, options));
      } else if (check == "appendix-c") {
        checks.push_back(verify_zeroing(config["buffer_sizes"].get<std::vector<std::size_t>>(),
                                        config["env"]["params"]["num_actions"], n, options));
      } else if (check == "thm4-coverage") {
        const json& a = config["algorithm"];
        checks.push_back(bound_coverage(setup, algorithm_spec(a, a["name"]),
                                        config["buffer_sizes"][0], config["delta"], n, options));
      } else if (check == "stability") {
        checks.push_back(verify_stability(setup, config["buffer_sizes"][0],
                                          optim_config(config["algorithm"]["optim"]),
                                          config["probe"]["n_algo_seeds"],
                                          config["probe"]["n_buffer_pairs"], n, options));
      }
    }
  }

  for (CheckResult& c : checks) {
    summary.pass = summary.pass && c.pass;
    summary.checks[c.name] = check_entry(c);
    for (BiasReport& r : c.reports) reports.push_back(std::move(r));
    if (c.stability) stability = c.stability;
  }
  if (!reports.empty()) {
    write_file(dir, "bias_report.csv", bias_report_csv(reports), summary);
    write_file(dir, "summary.csv", summary_csv(reports), summary);
  }
  if (stability) write_file(dir, "stability.json", dump(stability_json(*stability)), summary);
  if (!checks.empty()) write_file(dir, "theorem_checks.json", dump(summary.checks), summary);

  json meta = {
      {"subcommand", subcommand},
      {"config", config},
      {"versions",
       {{"reuse_bias_lab", kVersion},
        {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                              std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        {"compiler", __VERSION__}}},
      {"metadata",
       {{"policy_init", "zero-logits"},
        {"wis_algorithms_estimated_with", "wis"},
        {"j_true_horizon", "capped process"},
        {"rng", "mt19937_64 seeded per (master_seed, stream, seed index) via splitmix64"}}},
  };
  if (subcommand == "verify") meta["check"] = check;
  write_file(dir, "run_meta.json", dump(meta), summary);
  return summary;
}

}  // namespace rbl
