// Copyright 2026 The WarmFlow Authors
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


#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "warmflow/cli.hpp"
#include "warmflow/pipeline.hpp"
#include "warmflow/report.hpp"
#include "warmflow/svg.hpp"

namespace fs = std::filesystem;
using namespace warmflow;

namespace {

const fs::path kConfigs = fs::path(WARMFLOW_SOURCE_DIR) / "configs";

int wf(std::vector<std::string> args, std::string* err = nullptr) {
  args.insert(args.begin(), "warmflow");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream es;
  const int rc = cli::run(static_cast<int>(argv.size()), argv.data(), es);
  if (err) *err = es.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "warmflow_cli_test" / name;
  fs::remove_all(d);
  return d;
}

std::string smoke() { return (kConfigs / "smoke.json").string(); }

// Runs gen-data, train, eval, diagnose, ablate-sigma and rl on the smoke config.
void smoke_pipeline(const fs::path& root) {
  const std::string data = (root / "data").string(), ck = (root / "train" / "checkpoint.cbor").string();
  ASSERT_EQ(wf({"gen-data", "--config", smoke(), "--out", data}), 0);
  ASSERT_EQ(wf({"train", "--config", smoke(), "--set", "paths.data=" + data, "--out", (root / "train").string()}), 0);
  for (const char* cmd : {"eval", "diagnose", "rl"})
    ASSERT_EQ(wf({cmd, "--config", smoke(), "--set", "paths.data=" + data, "--set", "paths.checkpoint=" + ck, "--out",
                  (root / cmd).string()}),
              0)
        << cmd;
  ASSERT_EQ(wf({"ablate-sigma", "--config", smoke(), "--set", "paths.data=" + data, "--out",
                (root / "ablate").string()}),
            0);
}

}  // namespace

TEST(Cli, RerunsAreByteIdentical) {
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  smoke_pipeline(a);
  smoke_pipeline(b);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    if (rel.filename() == "resolved_config.json") continue;  // embeds the output paths
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
  EXPECT_GE(files, 20);
}

TEST(Cli, EveryOutputCarriesHashAndSeed) {
  const fs::path root = scratch("stamp");
  smoke_pipeline(root);
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    const std::string body = slurp(e.path());
    if (ext == ".csv") {
      const CsvTable t = read_csv(e.path());
      EXPECT_NO_THROW(t.column("config_hash")) << e.path();
      ASSERT_FALSE(t.rows.empty()) << e.path();
      EXPECT_EQ(t.rows[0][static_cast<std::size_t>(t.column("seed"))], "3") << e.path();
    } else if (ext == ".json") {
      const Json j = Json::parse(body);
      EXPECT_EQ(j.at("schema_version"), 1) << e.path();
      EXPECT_TRUE(j.contains("config_hash")) << e.path();
      EXPECT_EQ(j.at("seed"), 3) << e.path();
    } else if (ext == ".svg") {
      EXPECT_NE(body.find("config_hash="), std::string::npos) << e.path();
      EXPECT_NE(body.find("seed=3"), std::string::npos) << e.path();
    } else if (ext == ".cbor") {
      const LoadedPolicy lp = load_policy(e.path());
      EXPECT_FALSE(lp.config_hash.empty());
    }
  }
}

TEST(Cli, PlotReemitsSvgFromCsvOnly) {
  const fs::path root = scratch("plot");
  smoke_pipeline(root);
  for (const char* dir : {"train", "eval", "diagnose", "ablate", "rl"}) {
    const fs::path out = root / (std::string("plot_") + dir);
    ASSERT_EQ(wf({"plot", "--config", smoke(), "--set", "plot.inputs=" + (root / dir).string(), "--out", out.string()}),
              0);
    for (const auto& e : fs::directory_iterator(root / dir))
      if (e.path().extension() == ".svg") {
        EXPECT_EQ(slurp(e.path()), slurp(out / e.path().filename())) << e.path();
      }
  }
  std::string err;
  EXPECT_EQ(wf({"plot", "--config", smoke(), "--out", scratch("plot_empty").string()}, &err), 2);
}

TEST(Cli, UsageErrorsExitNonZeroWithRecord) {
  const std::string out = scratch("usage").string();
  std::string err;
  EXPECT_EQ(wf({"train", "--config", smoke()}, &err), 2);
  EXPECT_EQ(Json::parse(err).at("error").at("kind"), "usage");
  EXPECT_EQ(wf({"frobnicate", "--config", smoke(), "--out", out}, &err), 2);
  EXPECT_EQ(wf({"gen-data", "--config", "/nonexistent.json", "--out", out}, &err), 2);
  EXPECT_EQ(wf({"gen-data", "--config", smoke(), "--set", "nope.key=1", "--out", out}, &err), 2);
  EXPECT_NE(err.find("nope"), std::string::npos);
  EXPECT_EQ(wf({"eval", "--config", smoke(), "--set", "eval.episodes=0", "--out", out}, &err), 2);
  const Json rec = Json::parse(err);
  EXPECT_EQ(rec.at("schema_version"), 1);
  EXPECT_EQ(wf({"eval", "--config", smoke(), "--set", "paths.checkpoint=/nonexistent.cbor", "--out", out}, &err), 2);
}

TEST(Cli, SeedEnvironmentOverride) {
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  ::setenv("WARMFLOW_SEED", "11", 1);
  const int rc = wf({"gen-data", "--config", smoke(), "--out", a.string()});
  ::unsetenv("WARMFLOW_SEED");
  ASSERT_EQ(rc, 0);
  ASSERT_EQ(wf({"gen-data", "--config", smoke(), "--set", "seed=11", "--out", b.string()}), 0);
  EXPECT_EQ(Json::parse(slurp(a / "episodes.json")).at("seed"), 11);
  EXPECT_EQ(slurp(a / "data.csv"), slurp(b / "data.csv"));
  ASSERT_EQ(wf({"gen-data", "--config", smoke(), "--out", scratch("seed_c").string()}), 0);
  EXPECT_NE(slurp(a / "data.csv"), slurp(fs::temp_directory_path() / "warmflow_cli_test" / "seed_c" / "data.csv"));
}

TEST(Cli, HashMismatchWarnsAndFlags) {
  const fs::path root = scratch("mismatch");
  const std::string ck = (root / "train" / "checkpoint.cbor").string();
  ASSERT_EQ(wf({"train", "--config", smoke(), "--out", (root / "train").string()}), 0);
  std::string err;
  ASSERT_EQ(wf({"eval", "--config", smoke(), "--set", "paths.checkpoint=" + ck, "--out", (root / "same").string()},
               &err),
            0);
  EXPECT_EQ(err.find("warning"), std::string::npos);
  EXPECT_FALSE(Json::parse(slurp(root / "same" / "eval.json")).at("config_hash_mismatch").get<bool>());
  ASSERT_EQ(wf({"eval", "--config", smoke(), "--set", "paths.checkpoint=" + ck, "--set", "optim.lr=0.5", "--out",
                (root / "diff").string()},
               &err),
            0);
  EXPECT_NE(err.find("warning"), std::string::npos);
  EXPECT_TRUE(Json::parse(slurp(root / "diff" / "eval.json")).at("config_hash_mismatch").get<bool>());
}

TEST(Cli, SigmaSweepEmitsSevenRowsPerVariantAndSeed) {
  const fs::path out = scratch("sweep");
  ASSERT_EQ(wf({"ablate-sigma", "--config", smoke(), "--set", "ablate.sigmas=[1.5,1.0,0.5,0.3,0.1,0.05,0]", "--set",
                "ablate.seeds=[0,1]", "--set", "train.iterations=5", "--set", "net.hidden_width=8", "--set",
                "eval.episodes=2", "--out", out.string()}),
            0);
  const CsvTable t = read_csv(out / "sigma.csv");
  EXPECT_EQ(t.rows.size(), 2u * 2u * 7u);
  std::map<std::string, int> per;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    ++per[t.rows[r][static_cast<std::size_t>(t.column("variant"))] + "/" +
          t.rows[r][static_cast<std::size_t>(t.column("train_seed"))]];
  for (const auto& [k, v] : per) EXPECT_EQ(v, 7) << k;
  EXPECT_EQ(per.size(), 4u);
}

TEST(Cli, UnimodalFixtureIsSolved) {
  const fs::path root = scratch("unimodal");
  const std::string cfg = (kConfigs / "unimodal.json").string();
  ASSERT_EQ(wf({"train", "--config", cfg, "--out", (root / "train").string()}), 0);
  ASSERT_EQ(wf({"eval", "--config", cfg, "--set", "paths.checkpoint=" + (root / "train" / "checkpoint.cbor").string(),
                "--out", (root / "eval").string()}),
            0);
  const CsvTable t = read_csv(root / "eval" / "eval.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][static_cast<std::size_t>(t.column("episodes"))], "50");
  EXPECT_EQ(t.number(0, t.column("sr")), 1.0);
}
