/*
   Copyright 2026 The nonconv Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "nonconv/experiment.hpp"

using namespace nonconv;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("nonconv_cli_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const ojson& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

Run cli(const std::string& args, const fs::path& dir) {
  const auto errFile = dir / "stderr.txt";
  // default output directory, used when a call passes no --out
  const std::string cmd = "NONCONV_OUT=" + (dir / "default").string() + " " +
                          std::string(NONCONV_CLI) + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + errFile.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(errFile);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ojson minimal() {
  return ojson{{"schema_version", 1},
               {"polynomial", {{"linear", 1}}},
               {"tail", {{"alpha", 1.5}, {"k", 0.0}, {"c_plus", 0.5}, {"c_minus", 0.5}}},
               {"N", ojson::array({1000})},
               {"R", 10},
               {"seed", 7},
               {"diagnostics", {{"reference_draws", 100000}}}};
}

}  // namespace

TEST(Cli, MinimalReport) {
  const auto d = scratch("minimal");
  const auto cfg = write_config(d, minimal());
  const auto r = cli("report --config " + cfg.string() + " --out " + (d / "out").string(), d);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "out" / "manifest.json"));
  const auto csv = lines(d / "out" / "ensemble.csv");
  ASSERT_EQ(csv.size(), 12u);
  EXPECT_EQ(csv[0].rfind("# config: ", 0), 0u);
  EXPECT_EQ(csv[1], "replicate,seed,xi_theta0,xi,S_theta0,xi_probe0,xi_probe1,xi_probe2");
  EXPECT_EQ(csv[2].rfind("0," + std::to_string(derive_seed(7, 0)) + ",", 0), 0u);
  const auto man = ojson::parse(slurp(d / "out" / "manifest.json"));
  EXPECT_EQ(man["seed"].get<std::uint64_t>(), 7u);
  EXPECT_EQ(man["scheme"].get<std::string>(), "philox4x32-10");
  EXPECT_FALSE(man["files"].empty());
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto d = scratch("rerun");
  const auto cfg = write_config(d, minimal());
  ASSERT_EQ(cli("report --config " + cfg.string() + " --out " + (d / "a").string(), d).code, 0);
  ASSERT_EQ(cli("report --config " + cfg.string() + " --out " + (d / "b").string() +
                    " --threads 3", d).code, 0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(d / "a")) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(d / "b" / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 5u);
}

TEST(Cli, OutputDirectoryFromEnvironment) {
  const auto d = scratch("env");
  const auto cfg = write_config(d, minimal());
  ASSERT_EQ(cli("indices --config " + cfg.string(), d).code, 0);
  EXPECT_TRUE(fs::exists(d / "default" / "indices.json"));
  EXPECT_TRUE(fs::exists(d / "default" / "manifest.json"));
}

TEST(Cli, SeedFlagOverridesConfig) {
  const auto d = scratch("seed");
  const auto cfg = write_config(d, minimal());
  ASSERT_EQ(cli("simulate --config " + cfg.string() + " --seed 99 --out " + (d / "o").string(), d).code, 0);
  const auto csv = lines(d / "o" / "ensemble.csv");
  EXPECT_EQ(csv[2].rfind("0," + std::to_string(derive_seed(99, 0)) + ",", 0), 0u);
}

TEST(Cli, AlphaOutOfRangeExitsTwo) {
  const auto d = scratch("alpha");
  auto j = minimal();
  j["tail"]["alpha"] = 2.5;
  const auto r = cli("report --config " + write_config(d, j).string() + " --out " + (d / "o").string(), d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("alpha"), std::string::npos) << r.err;
}

TEST(Cli, UnknownKeyExitsTwo) {
  const auto d = scratch("unknown");
  auto j = minimal();
  j["replicates"] = 5;
  const auto r = cli("indices --config " + write_config(d, j).string() + " --out " + (d / "o").string(), d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("replicates"), std::string::npos) << r.err;
  j = minimal();
  j["diagnostics"]["kolmogorov"] = true;
  EXPECT_EQ(cli("indices --config " + write_config(d, j).string(), d).code, 2);
}

TEST(Cli, MissingSchemaVersionAndBadJson) {
  const auto d = scratch("schema");
  auto j = minimal();
  j.erase("schema_version");
  EXPECT_EQ(cli("indices --config " + write_config(d, j).string(), d).code, 2);
  std::ofstream(d / "broken.json") << "{ \"schema_version\": 1, ";
  EXPECT_EQ(cli("indices --config " + (d / "broken.json").string(), d).code, 2);
}

TEST(Cli, MissingConfigFileExitsFour) {
  const auto d = scratch("missing");
  EXPECT_EQ(cli("tails --config " + (d / "nope.json").string(), d).code, 4);
}

TEST(Cli, OverflowExitsThree) {
  const auto d = scratch("overflow");
  auto j = minimal();
  j["polynomial"] = ojson{{"terms", ojson::array({ojson{{"exponents", {200}}}})}};
  const auto r = cli("simulate --config " + write_config(d, j).string() + " --out " +
                         (d / "o").string(), d);
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, StageCommands) {
  const auto d = scratch("stages");
  auto j = minimal();
  j["polynomial"] = ojson{{"linear", 2}};
  j["qcase"] = "arith_prog";
  const auto cfg = write_config(d, j).string();
  for (const std::string cmd : {"tails", "indices", "decompose"}) {
    const auto r = cli(cmd + " --config " + cfg + " --out " + (d / cmd).string(), d);
    ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    const auto out = ojson::parse(slurp(d / cmd / (cmd + ".json")));
    EXPECT_TRUE(out.contains(cmd));
    EXPECT_TRUE(fs::exists(d / cmd / "manifest.json"));
  }
}

TEST(Cli, PlotSchemas) {
  const auto d = scratch("plots");
  auto j = minimal();
  j["diagnostics"] = ojson{{"tail_fit", true}, {"trend", true}, {"reference_draws", 100000},
                           {"tail_fit_draws", 1000000}};
  j["N"] = ojson::array({1000, 10000});
  const auto r = cli("report --config " + write_config(d, j).string() + " --out " + (d / "o").string(), d);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto tl = lines(d / "o" / "tail_ladder.csv");
  ASSERT_GT(tl.size(), 3u);
  EXPECT_EQ(tl[1], "z,empirical_survival,fitted_survival");
  const auto cf = lines(d / "o" / "cf_grid.csv");
  ASSERT_GT(cf.size(), 3u);
  EXPECT_EQ(cf[1], "xi,re_emp,im_emp,re_theory,im_theory");
  const auto tr = lines(d / "o" / "trend.csv");
  EXPECT_EQ(tr[1], "series,x,value");
  EXPECT_EQ(tr.size(), 4u);
}

TEST(Cli, PathSampleMatchesStoredPath) {
  const auto d = scratch("path");
  const auto cfg = write_config(d, minimal());
  const auto r = cli("simulate --config " + cfg.string() + " --plot path-sample --out " +
                         (d / "o").string(), d);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = lines(d / "o" / "path_sample.csv");
  EXPECT_EQ(csv[1], "t,value");

  const auto c = load_config(cfg.string());
  const auto norm = config_normalization(c, 1000);
  const auto s = c.sampler().with_seed(derive_seed(c.seed, 0));
  const auto b = simulate_paths(c.F, c.qcase, 1000, c.T, s, norm);
  ASSERT_EQ(csv.size(), b.sum.values.size() + 2);
  for (std::size_t m = 0; m < b.sum.values.size(); ++m) {
    const auto& line = csv[m + 2];
    const double v = std::stod(line.substr(line.find(',') + 1));
    ASSERT_EQ(v, b.sum.values[m]) << "m=" << m;
  }
}

TEST(Cli, MissingDiagnosticExitsTwo) {
  const auto d = scratch("nodiag");
  const auto cfg = write_config(d, minimal());
  const auto r = cli("simulate --config " + cfg.string() + " --plot tail-ladder --out " +
                         (d / "o").string(), d);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("tail_fit"), std::string::npos) << r.err;
}

TEST(Cli, BadPlotKindExitsTwo) {
  const auto d = scratch("badplot");
  const auto cfg = write_config(d, minimal());
  EXPECT_EQ(cli("simulate --config " + cfg.string() + " --plot histogram", d).code, 2);
}

TEST(Cli, StudyReport) {
  const auto d = scratch("study");
  ojson j{{"schema_version", 1},
          {"seed", 3},
          {"study", "coloring_decomposition"},
          {"study_params", {{"ells", {2, 3}}, {"N", 2000}, {"gamma_bound", 20000},
                            {"density_tolerance", 0.05}}}};
  const auto cfg = write_config(d, j).string();
  const auto r = cli("report --config " + cfg + " --out " + (d / "o").string(), d);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = ojson::parse(slurp(d / "o" / "study.json"));
  EXPECT_TRUE(out["study"]["result"]["pass"].get<bool>());
  j["study_params"]["colour"] = 1;
  EXPECT_EQ(cli("report --config " + write_config(d, j).string(), d).code, 2);
  j["study_params"].erase("colour");
  j["study"] = "no_such_study";
  EXPECT_EQ(cli("report --config " + write_config(d, j).string(), d).code, 2);
}

TEST(Cli, ShippedConfigsParse) {
  std::size_t n = 0;
  for (const auto& dir : {fs::path(NONCONV_SOURCE_DIR) / "configs",
                          fs::path(NONCONV_SOURCE_DIR) / "configs" / "acceptance"})
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".json") continue;
      EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
      ++n;
    }
  EXPECT_GE(n, 9u);
}
