// Copyright 2026 The chunksched Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "chunksched/cli.hpp"
#include "chunksched/schedule_json.hpp"

namespace chunksched {
namespace {

namespace fs = std::filesystem;

const std::string kFx = CHUNKSCHED_FIXTURE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("chunksched_cli_" +
            std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    out_.str("");
    err_.str("");
    return run_cli(args, out_, err_);
  }
  fs::path out(const std::string& sub) const { return dir_ / sub; }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(Cli, ValidateOk) {
  EXPECT_EQ(run({"validate", "--kernel", kFx + "/ag_gemm.py", "--template",
                 "ring_allgather", "--world-size", "4", "--out", out("v")}),
            kExitOk);
  EXPECT_TRUE(fs::exists(out("v") / "report.json"));
  EXPECT_EQ(Json::parse(slurp(out("v") / "report.json"))["violations"].size(), 0u);
}

TEST_F(Cli, ValidateCycle) {
  EXPECT_EQ(run({"validate", "--schedule", kFx + "/cyclic_schedule.json"}),
            kExitValidation);
  EXPECT_NE(out_.str().find("dependence cycle"), std::string::npos) << out_.str();
  EXPECT_NE(out_.str().find("(0,0)"), std::string::npos);
}

TEST_F(Cli, MissingKernel) {
  EXPECT_EQ(run({"validate", "--kernel", kFx + "/missing.py", "--template",
                 "ring_allgather", "--world-size", "4"}),
            kExitInput);
  EXPECT_NE(err_.str().find("file not found"), std::string::npos);
}

TEST_F(Cli, BadFlagsAndSynth) {
  EXPECT_EQ(run({"simulate", "--no-such-flag"}), kExitInput);
  EXPECT_EQ(run({"lower", "--ir", kFx + "/partition_ir.json", "--path", "synth"}),
            kExitValidation);
  EXPECT_NE(err_.str().find("unimplemented"), std::string::npos);
}

TEST_F(Cli, LowerWritesSchedule) {
  ASSERT_EQ(run({"lower", "--ir", kFx + "/partition_ir.json", "--path", "template",
                 "--out", out("l")}),
            kExitOk);
  const CommSchedule s = schedule_from_string(slurp(out("l") / "schedule.json"));
  EXPECT_EQ(s.world_size, 4);
  EXPECT_TRUE(validate_schedule(s).ok());
}

TEST_F(Cli, SimulateRingPasses) {
  ASSERT_EQ(run({"simulate", "--kernel", kFx + "/ag_gemm.py", "--template",
                 "ring_allgather", "--world-size", "4", "--out", out("s")}),
            kExitOk)
      << err_.str();
  const Json v = Json::parse(slurp(out("s") / "verdict.json"));
  EXPECT_EQ(v["verdict"], "PASS");
  EXPECT_EQ(v["oracle_equal"], true);
  // Per-rank compute and communication lanes.
  // One lane per SM, one per copy engine.
  std::set<std::pair<int, std::string>> lanes;
  const Json trace = Json::parse(slurp(out("s") / "trace.json"));
  for (const Json& e : trace["traceEvents"]) {
    if (e["ph"] == "M") lanes.insert({e["pid"].get<int>(), e["args"]["name"].get<std::string>()});
  }
  for (int r = 0; r < 4; ++r) {
    EXPECT_TRUE(lanes.count({r, "sm0"})) << r;
    EXPECT_TRUE(lanes.count({r, "copy_engine"})) << r;
  }
  EXPECT_TRUE(fs::exists(out("s") / "summary.csv"));
}

TEST_F(Cli, DroppedWaitFailsCitingTile) {
  ASSERT_EQ(run({"plan", "--kernel", kFx + "/ag_gemm.py", "--template",
                 "ring_allgather", "--world-size", "4", "--out", out("p")}),
            kExitOk);
  EXPECT_TRUE(fs::exists(out("p") / "plan.json"));
  EXPECT_TRUE(fs::exists(out("p") / "depgraph_rank0.dot"));
  EXPECT_EQ(run({"simulate", "--program", (out("p") / "program.json").string(),
                 "--drop-wait", "1", "--jitter", "--straggler", "8", "--out",
                 out("m")}),
            kExitValidation);
  const Json v = Json::parse(slurp(out("m") / "verdict.json"));
  EXPECT_EQ(v["verdict"], "FAIL");
  EXPECT_NE(v["first_violation"].dump().find("tile"), std::string::npos) << v.dump();
}

TEST_F(Cli, SingleRankIsComputeBound) {
  ASSERT_EQ(run({"simulate", "--kernel", kFx + "/ag_gemm.py", "--template",
                 "ring_allgather", "--world-size", "1", "--out", out("w1")}),
            kExitOk);
  const Json v = Json::parse(slurp(out("w1") / "verdict.json"));
  EXPECT_EQ(v["verdict"], "PASS");
  // 32 tiles fit one wave: launch plus one tile.
  const double tile_us = 2.0 * 128 * 128 * 256 / (989e12 / 132) * 1e6;
  EXPECT_NEAR(v["makespan_us"].get<double>(), 5.0 + tile_us, 1e-6);
}

TEST_F(Cli, TuneTableAndDeterminism) {
  const std::vector<std::string> args = {
      "tune", "--kernel", kFx + "/gemm_ar.py", "--template", "partition_allreduce",
      "--world-size", "4", "--splits", "1,2,3,4,8", "--backends",
      "copy_engine,ldst_specialized", "--reduce-backends", "ldst_specialized",
      "--comm-sms", "16"};
  auto with_out = [&](const std::string& d) {
    auto a = args;
    a.push_back("--out");
    a.push_back(out(d).string());
    return a;
  };
  ASSERT_EQ(run(with_out("t1")), kExitOk) << err_.str();
  ASSERT_EQ(run(with_out("t2")), kExitOk);
  const std::string csv = slurp(out("t1") / "tune.csv");
  EXPECT_EQ(csv, slurp(out("t2") / "tune.csv"));
  EXPECT_EQ(slurp(out("t1") / "best.json"), slurp(out("t2") / "best.json"));
  std::istringstream in(csv);
  std::string line;
  int rows = -1, best = 0;
  while (std::getline(in, line)) {
    ++rows;
    best += rows > 0 && line.back() == '1';
  }
  EXPECT_EQ(rows, 10);
  EXPECT_EQ(best, 1);
  EXPECT_NE(slurp(out("t1") / "sweep.csv").find("split,2,"), std::string::npos);
}

TEST_F(Cli, TuneFullyPruned) {
  EXPECT_EQ(run({"tune", "--kernel", kFx + "/gemm_ar.py", "--template",
                 "partition_allreduce", "--world-size", "4", "--splits", "3",
                 "--out", out("x")}),
            kExitNoFeasible);
  EXPECT_NE(err_.str().find("indivisible split"), std::string::npos) << err_.str();
  std::istringstream in(slurp(out("x") / "tune.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_NE(line.find("indivisible split"), std::string::npos);
}

TEST_F(Cli, TraceReexport) {
  ASSERT_EQ(run({"simulate", "--kernel", kFx + "/ag_gemm.py", "--template",
                 "allgather_1d_swizzle", "--world-size", "2", "--out", out("s")}),
            kExitOk);
  ASSERT_EQ(run({"trace", "--trace", (out("s") / "trace.json").string(), "--out",
                 out("t")}),
            kExitOk);
  EXPECT_EQ(slurp(out("s") / "trace.json"), slurp(out("t") / "trace.json"));
}

}  // namespace
}  // namespace chunksched
