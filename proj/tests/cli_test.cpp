#include "bcfl/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace bcfl {
namespace {

namespace fs = std::filesystem;
const std::string kConfigs = BCFL_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("bcfl-cli-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const nlohmann::json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump();
  return p.string();
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const RunOptions& opt) {
  std::ostringstream out, err;
  const int code = cmd_run(opt, out, err);
  return {code, out.str(), err.str()};
}

Outcome chain(const std::string& action, const fs::path& path) {
  std::ostringstream out, err;
  const int code = cmd_chain(action, path.string(), out, err);
  return {code, out.str(), err.str()};
}

TEST(CmdRunTest, BundledCleanConfig) {
  const auto dir = scratch("clean");
  const auto o = run({kConfigs + "/clean.json", std::nullopt, dir.string(), true, false});
  EXPECT_EQ(o.code, kExitOk) << o.err;
  EXPECT_NE(o.out.find("final accuracy"), std::string::npos);
  for (const char* f : {"summary.json", "summary.csv", "metrics.jsonl", "chain.bin", "config.resolved.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  fs::remove_all(dir);
}

TEST(CmdRunTest, FlagsFiveMaliciousOfTen) {
  const auto dir = scratch("p50");
  const auto o = run({kConfigs + "/poisoned-50.json", std::nullopt, dir.string(), true, false});
  EXPECT_EQ(o.code, kExitOk);
  EXPECT_NE(o.out.find("malicious             5 ["), std::string::npos) << o.out;
  std::ifstream in(dir / "summary.json");
  EXPECT_EQ(nlohmann::json::parse(in)["malicious_count"], 5);
  fs::remove_all(dir);
}

TEST(CmdRunTest, SeedOverrideChangesRun) {
  const auto dir = scratch("seed");
  const auto a = run({kConfigs + "/smoke.json", 7, (dir / "a").string(), true, false});
  const auto b = run({kConfigs + "/smoke.json", 8, (dir / "b").string(), true, false});
  ASSERT_EQ(a.code, kExitOk);
  ASSERT_EQ(b.code, kExitOk);
  std::ifstream ra(dir / "a" / "config.resolved.json"), rb(dir / "b" / "config.resolved.json");
  EXPECT_EQ(nlohmann::json::parse(ra)["seeds"]["master"], 7);
  EXPECT_EQ(nlohmann::json::parse(rb)["seeds"]["master"], 8);
  fs::remove_all(dir);
}

TEST(CmdRunTest, ConfigErrorsExitTwoWithPath) {
  const auto dir = scratch("bad");
  auto o = run({write_config(dir, {{"attack", {{"bogus", 1}}}}), std::nullopt, (dir / "out").string(), true, false});
  EXPECT_EQ(o.code, kExitConfig);
  EXPECT_NE(o.err.find("attack.bogus"), std::string::npos) << o.err;
  o = run({write_config(dir, {{"aggregation", {{"nodes", 1}}}}), std::nullopt, (dir / "out").string(), true, false});
  EXPECT_EQ(o.code, kExitConfig);
  EXPECT_NE(o.err.find("aggregation.nodes"), std::string::npos) << o.err;
  o = run({(dir / "missing.json").string(), std::nullopt, (dir / "out").string(), true, false});
  EXPECT_EQ(o.code, kExitConfig);
  fs::remove_all(dir);
}

TEST(CmdRunTest, AbortedExperimentExitsThree) {
  const auto dir = scratch("abort");
  nlohmann::json j;
  std::ifstream(kConfigs + "/smoke.json") >> j;
  j["aggregation"]["faulty_nodes"] = 3;
  const auto o = run({write_config(dir, j), std::nullopt, (dir / "out").string(), true, false});
  EXPECT_EQ(o.code, kExitAborted);
  EXPECT_NE(o.err.find("no strict majority"), std::string::npos) << o.err;
  EXPECT_NE(o.out.find("(aborted)"), std::string::npos);
  fs::remove_all(dir);
}

TEST(CmdSelftestTest, PassesAndReportsTiming) {
  std::ostringstream out;
  EXPECT_EQ(cmd_selftest({}, out), kExitOk);
  for (const auto& name : selftest_suites()) {
    EXPECT_NE(out.str().find("PASS " + name), std::string::npos) << out.str();
  }
  for (const auto& r : run_selftest()) {
    EXPECT_GT(r.checks, 0u);
    EXPECT_GT(r.ms, 0.0);
  }
}

TEST(CmdSelftestTest, InjectedFaultFailsThatSuiteOnly) {
  for (const auto& name : selftest_suites()) {
    std::ostringstream out;
    EXPECT_NE(cmd_selftest({name, 1}, out), kExitOk);
    for (const auto& r : run_selftest({name, 1})) EXPECT_EQ(r.passed(), r.name != name) << name << "/" << r.name;
  }
  std::ostringstream out;
  EXPECT_THROW(cmd_selftest({"nope", 1}, out), InvalidArgument);
}

class CmdChainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("chain");
    ExperimentConfig cfg;
    cfg.federation.rounds = 3;
    cfg.ledger.difficulty = 1;
    run_experiment(cfg, {true, dir_.string()});
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(CmdChainTest, VerifyValid) {
  const auto o = chain("verify", dir_ / "chain.bin");
  EXPECT_EQ(o.code, kExitOk) << o.err;
  EXPECT_EQ(o.out, "ok, 4 blocks\n");
}

TEST_F(CmdChainTest, DumpIsJsonLines) {
  const auto o = chain("dump", dir_ / "chain.bin");
  EXPECT_EQ(o.code, kExitOk);
  std::istringstream lines(o.out);
  std::string line;
  size_t i = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["index"], i++);
  }
  EXPECT_EQ(i, 4u);
}

TEST_F(CmdChainTest, CorruptionReportsFirstBadIndex) {
  const auto path = dir_ / "chain.bin";
  auto bytes = detail::read_file(path);
  Chain c = decode_chain(bytes);
  // Start of block 2's record: 7-byte file prefix, then length-framed records.
  size_t pos = 7;
  for (int b = 0; b < 2; ++b) pos += block_record(c.blocks()[b]).size();
  const size_t header = block_header_bytes(c.blocks()[2]).size();
  auto payload_flip = bytes;
  payload_flip[pos + 4 + header - 9] ^= 0x01;  // last byte of the model_ref
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(payload_flip.data()), static_cast<std::streamsize>(payload_flip.size()));
  auto o = chain("verify", path);
  EXPECT_EQ(o.code, kExitFailure);
  EXPECT_NE(o.err.find("first bad block 2"), std::string::npos) << o.err;

  auto magic_flip = bytes;
  magic_flip[pos + 4] ^= 0x20;
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(magic_flip.data()), static_cast<std::streamsize>(magic_flip.size()));
  o = chain("verify", path);
  EXPECT_EQ(o.code, kExitFailure);
  EXPECT_NE(o.err.find("block 2"), std::string::npos) << o.err;
}

TEST_F(CmdChainTest, TamperedModelFileIsReported) {
  const auto model = dir_ / "models" / "round-2.bcfm";
  auto bytes = detail::read_file(model);
  bytes.back() ^= 0x01;
  std::ofstream(model, std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  const auto o = chain("verify", dir_ / "chain.bin");
  EXPECT_EQ(o.code, kExitFailure);
  EXPECT_NE(o.err.find("block 2 model digest mismatch"), std::string::npos) << o.err;
  fs::remove(model);
  EXPECT_NE(chain("verify", dir_ / "chain.bin").err.find("model file missing"), std::string::npos);
}

TEST_F(CmdChainTest, MissingFileAndBadAction) {
  EXPECT_EQ(chain("verify", dir_ / "nope.bin").code, kExitFailure);
  EXPECT_EQ(chain("mine", dir_ / "chain.bin").code, kExitFailure);
}

TEST(CmdBenchTest, FourRowsWithPositiveTimes) {
  BenchOptions opt;
  opt.runs = 3;
  const auto rows = run_bench(ExperimentConfig{}, opt);
  ASSERT_EQ(rows.size(), 4u);
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].nodes, opt.nodes[i]);
    EXPECT_GT(rows[i].deploy_ms, 0.0);
    EXPECT_GT(rows[i].verify_ms, 0.0);
  }
  std::ostringstream out, err;
  EXPECT_EQ(cmd_bench("", {{2, 3}, 1, 2}, out, err), kExitOk);
  const std::string csv = out.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "nodes,deploy_ms,verify_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_THROW(run_bench(ExperimentConfig{}, {{1}, 1, 2}), InvalidArgument);
}

}  // namespace
}  // namespace bcfl
