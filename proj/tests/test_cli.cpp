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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "rbl_cli_test";
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = scratch() / "last.log";
  const std::string cmd =
      std::string("\"") + RBL_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, VerifyWritesOutputs) {
  const fs::path out = scratch() / "thm3";
  fs::remove_all(out);
  EXPECT_EQ(cli("verify thm3 --seeds 1000 --jobs 1 --output-dir \"" + out.string() + "\""), 0);
  for (const char* f : {"bias_report.csv", "summary.csv", "theorem_checks.json", "run_meta.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Cli, MissingConfigExitsTwo) {
  std::string log;
  EXPECT_EQ(cli("measure-bias --config /no/such/file.json", &log), 2);
  EXPECT_NE(log.find("/no/such/file.json"), std::string::npos);
}

TEST(Cli, AllConfigErrorsReported) {
  std::string log;
  EXPECT_EQ(cli("measure-bias --seeds 0 --set delta=7 --set bogus=1", &log), 2);
  EXPECT_NE(log.find("n_seeds"), std::string::npos);
  EXPECT_NE(log.find("delta"), std::string::npos);
  EXPECT_NE(log.find("bogus"), std::string::npos);
}

TEST(Cli, FailedCheckExitsOne) {
  const fs::path out = scratch() / "gradcheck";
  EXPECT_EQ(cli("gradcheck --seeds 5 --set gradcheck.tolerance_smooth=1e-300 --output-dir \"" +
                out.string() + "\""),
            1);
  EXPECT_EQ(cli("gradcheck --seeds 5 --output-dir \"" + out.string() + "\""), 0);
}

TEST(Cli, PrintConfigShowsDefaults) {
  std::string log;
  ASSERT_EQ(cli("measure-bias --print-config --lr 0.5", &log), 0);
  const json c = json::parse(log);
  EXPECT_EQ(c["algorithm"]["optim"]["learning_rate"].get<double>(), 0.5);
  EXPECT_EQ(c["algorithm"]["optim"]["biris_alpha"].get<double>(), 0.05);
}

TEST(Cli, BoundsSubcommand) {
  const fs::path out = scratch() / "bounds";
  ASSERT_EQ(cli("bounds --set bounds.product_ratio.eps=0.1 --set bounds.product_ratio.T=10 "
                "--output-dir \"" + out.string() + "\""),
            0);
  std::ifstream in(out / "bounds.json");
  const json b = json::parse(in);
  EXPECT_NEAR(b["product_ratio_bound"].get<double>(), 1.5937424601, 1e-12);
}
