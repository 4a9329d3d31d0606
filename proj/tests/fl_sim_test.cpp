#include "bcfl/fl_sim.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

namespace bcfl {
namespace {

const std::string kConfigs = BCFL_CONFIG_DIR;

ExperimentConfig small_config(uint64_t seed = 1) {
  ExperimentConfig c;
  c.name = "small";
  c.federation.rounds = 3;
  c.ledger.difficulty = 1;
  c.seeds.master = seed;
  return c;
}

Dataset labeled(std::vector<uint32_t> labels, uint32_t classes) {
  Dataset ds{{2}, {}, {}, classes};
  for (size_t i = 0; i < labels.size(); ++i) ds.push_back(std::vector<double>{double(i), -double(i)}, labels[i]);
  return ds;
}

TEST(FlipLabelsTest, FullHalfAndErrors) {
  std::vector<uint32_t> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(0);
  for (int i = 0; i < 60; ++i) labels.push_back(2);
  const Dataset ds = labeled(labels, 4);

  const Dataset all = flip_labels(ds, 0, 1, 1.0, 3);
  EXPECT_EQ(std::count(all.labels.begin(), all.labels.end(), 0u), 0);
  EXPECT_EQ(all.features, ds.features);

  const Dataset half = flip_labels(ds, 0, 1, 0.5, 3);
  EXPECT_EQ(std::count(half.labels.begin(), half.labels.end(), 1u), 50);
  EXPECT_EQ(std::count(half.labels.begin(), half.labels.end(), 2u), 60);
  EXPECT_EQ(flip_labels(ds, 0, 1, 0.5, 3).labels, half.labels);
  EXPECT_NE(flip_labels(ds, 0, 1, 0.5, 4).labels, half.labels);

  const Dataset third = flip_labels(labeled({0, 0, 0}, 2), 0, 1, 0.34, 1);
  EXPECT_EQ(std::count(third.labels.begin(), third.labels.end(), 1u), 2);  // ceil(1.02)

  EXPECT_THROW(flip_labels(ds, 0, 1, 0.0, 3), InvalidArgument);
  EXPECT_THROW(flip_labels(ds, 0, 0, 1.0, 3), InvalidArgument);
  EXPECT_THROW(flip_labels(ds, 3, 1, 1.0, 3), InvalidArgument);  // absent
  EXPECT_THROW(flip_labels(ds, 0, 4, 1.0, 3), InvalidArgument);  // out of range
}

TEST(ScaleParamsTest, Examples) {
  const Model m = make_mlp(3, 4, 2, 1);
  EXPECT_EQ(serialize(scale_params(m, 1.0)), serialize(m));
  Model two = build_model({1}, {LayerSpec::dense(1, 1)}, 0);
  two = with_params(two, std::vector<double>{1, -3});
  EXPECT_EQ(flatten_params(scale_params(two, 2.0)), (std::vector<double>{2, -6}));
  EXPECT_THROW(scale_params(m, 0.0), InvalidArgument);
}

TEST(ScaleParamsTest, PositiveScalingKeepsLinearArgmax) {
  Rng rng(2);
  Model lin = build_model({6}, {LayerSpec::dense(6, 4)}, 3);
  for (auto& b : lin.layers[0].bias.data) b = 0;
  for (double gamma : {0.01, 0.5, 3.0, 250.0}) {
    const Model scaled = scale_params(lin, gamma);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> x(6);
      for (auto& v : x) v = uniform_real(rng, -2, 2);
      // Oracle: argmax of W x computed directly.
      std::vector<double> z(4, 0.0);
      for (int o = 0; o < 4; ++o) {
        for (int i = 0; i < 6; ++i) z[o] += lin.layers[0].weight.data[o * 6 + i] * x[i];
      }
      ASSERT_EQ(argmax(forward(scaled, Tensor({6}, x)).data), argmax(z));
    }
  }
}

TEST(SelectMaliciousTest, Counts) {
  std::vector<uint32_t> ids(10);
  std::iota(ids.begin(), ids.end(), 0u);
  EXPECT_TRUE(select_malicious(ids, 0.0, 1).empty());
  EXPECT_EQ(select_malicious(ids, 0.1, 1).size(), 1u);
  EXPECT_EQ(select_malicious(ids, 0.3, 1).size(), 3u);
  const auto five = select_malicious(ids, 0.5, 1);
  EXPECT_EQ(five.size(), 5u);
  EXPECT_EQ(select_malicious(ids, 0.5, 1), five);
  EXPECT_EQ(std::set<uint32_t>(five.begin(), five.end()).size(), 5u);
  EXPECT_THROW(select_malicious(ids, 0.6, 1), InvalidArgument);
}

TEST(RunRoundTest, VerifierDoesNotChangeCleanRuns) {
  ExperimentConfig on = small_config(), off = small_config();
  off.verifier.enabled = false;
  const auto a = run_experiment(on), b = run_experiment(off);
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (size_t r = 0; r < a.rounds.size(); ++r) {
    EXPECT_EQ(a.rounds[r].committed_digest, b.rounds[r].committed_digest) << "round " << r + 1;
  }
  EXPECT_TRUE(a.summary.detector_fpr.has_value());
  EXPECT_EQ(a.summary.false_positives, 0u);
}

TEST(RunRoundTest, AllMaliciousAborts) {
  SimState s = init_state(small_config());
  for (uint32_t c : s.client_ids()) s.malicious.insert(c);
  const RoundMetrics rm = run_round(s);
  EXPECT_TRUE(rm.aborted);
  EXPECT_EQ(rm.attempts, 2u);
  EXPECT_TRUE(rm.aggregated.empty());
  EXPECT_EQ(s.chain.size(), 1u);
  EXPECT_EQ(s.round, 0u);
}

TEST(RunRoundTest, OneAttackerOfTenLeavesNineAggregated) {
  ExperimentConfig cfg = small_config();
  cfg.attack.malicious_fraction = 0.1;
  SimState s = init_state(cfg);
  ASSERT_EQ(s.malicious.size(), 1u);
  const RoundMetrics rm = run_round(s);
  ASSERT_FALSE(rm.aborted);
  EXPECT_EQ(rm.aggregated.size(), 9u);
  EXPECT_FALSE(std::count(rm.aggregated.begin(), rm.aggregated.end(), *s.malicious.begin()));
  EXPECT_EQ(s.chain.size(), 2u);
  EXPECT_TRUE(validate_chain(s.chain).ok);
}

TEST(RunRoundTest, FaultyNodes) {
  ExperimentConfig minority = small_config();
  minority.aggregation.faulty_nodes = 2;
  SimState a = init_state(minority);
  const RoundMetrics ra = run_round(a);
  EXPECT_FALSE(ra.aborted);
  EXPECT_EQ(ra.consensus_support, 3u);

  ExperimentConfig majority = small_config();
  majority.aggregation.faulty_nodes = 3;
  const auto res = run_experiment(majority);
  EXPECT_TRUE(res.summary.aborted);
  EXPECT_EQ(res.rounds.size(), 1u);
  EXPECT_EQ(res.rounds[0].attempts, 2u);

  majority.aggregation.faulty_transient = true;
  SimState t = init_state(majority);
  const RoundMetrics rt = run_round(t);
  EXPECT_FALSE(rt.aborted);
  EXPECT_EQ(rt.attempts, 2u);
}

TEST(RunRoundTest, SecurePathMatchesPlaintextPath) {
  ExperimentConfig cfg = small_config();
  cfg.attack.malicious_fraction = 0.2;
  SimState secure = init_state(cfg), plain = init_state(cfg);
  const RoundMetrics rs = run_round(secure), rp = run_round(plain, {true, ""});
  ASSERT_FALSE(rs.aborted);
  ASSERT_EQ(rs.aggregated, rp.aggregated);
  const auto a = flatten_params(secure.global), b = flatten_params(plain.global);
  double worst = 0;
  for (size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::fabs(a[j] - b[j]));
  EXPECT_LE(worst, 2e-4);
}

TEST(ExperimentTest, WritesArtifactsDeterministically) {
  const auto dir = std::filesystem::temp_directory_path() / "bcfl-flsim-test";
  std::filesystem::remove_all(dir);
  ExperimentConfig cfg = small_config(4);
  cfg.attack.malicious_fraction = 0.2;
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const auto res = run_experiment(cfg, {false, (dir / "a").string()});
  run_experiment(cfg, {false, (dir / "b").string()});
  EXPECT_EQ(read(dir / "a" / "metrics.jsonl"), read(dir / "b" / "metrics.jsonl"));
  EXPECT_EQ(read(dir / "a" / "summary.csv"), read(dir / "b" / "summary.csv"));
  EXPECT_EQ(read(dir / "a" / "chain.bin"), read(dir / "b" / "chain.bin"));

  const std::string metrics = read(dir / "a" / "metrics.jsonl");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  const Chain chain = load_chain((dir / "a" / "chain.bin").string());
  EXPECT_TRUE(validate_chain(chain).ok);
  EXPECT_EQ(chain.size(), 4u);
  for (uint32_t r = 1; r <= 3; ++r) {
    const std::string bytes = read(dir / "a" / chain.find_round(r)->payload.model_ref);
    EXPECT_TRUE(verify_global(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()),
                              chain, r));
  }
  const auto summary = nlohmann::json::parse(read(dir / "a" / "summary.json"));
  EXPECT_EQ(summary["malicious_count"], 2);
  EXPECT_TRUE(summary.contains("detector_false_positive_rate"));
  EXPECT_EQ(summary["final_digest"], res.summary.final_digest);
  std::filesystem::remove_all(dir);
}

TEST(ExperimentTest, CleanAccuracyMostlyNonDecreasing) {
  // Seeds 1-5, median of the per-run fraction of rounds that did not lose accuracy.
  std::vector<double> fractions;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ExperimentConfig cfg = load_config(kConfigs + "/clean.json", false);
    cfg.seeds.master = seed;
    const auto res = run_experiment(cfg, {true, ""});
    ASSERT_EQ(res.rounds.size(), 25u);
    int ok = 0;
    double prev = res.summary.initial_accuracy;
    for (const auto& r : res.rounds) {
      ok += r.global_accuracy >= prev;
      prev = r.global_accuracy;
    }
    fractions.push_back(ok / 25.0);
    EXPECT_GT(res.summary.final_accuracy, 0.85) << "seed " << seed;
  }
  std::sort(fractions.begin(), fractions.end());
  EXPECT_GE(fractions[2], 0.7);
}

TEST(PrepareDataTest, SplitsAndErrors) {
  const ExperimentConfig cfg = small_config();
  const auto d = prepare_data(cfg);
  EXPECT_EQ(d.verify.size(), 200u);
  EXPECT_EQ(d.test.size(), 400u);
  size_t total = 0;
  for (const auto& s : d.shards) total += s.size();
  EXPECT_EQ(total, 2000u - 600u);
  ExperimentConfig tiny = small_config();
  tiny.data.per_class = 100;
  EXPECT_THROW(prepare_data(tiny), ConfigError);
  ExperimentConfig cnn = small_config();
  cnn.model.kind = "cnn";
  EXPECT_THROW(prepare_data(cnn), ConfigError);
}

}  // namespace
}  // namespace bcfl
