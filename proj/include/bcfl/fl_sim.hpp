#pragma once

// Federated rounds end to end: local training (with optional label-flip
// attackers), encrypted verification, share-based aggregation across
// nodes, majority-hash consensus and the chain append.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcfl/config.hpp"
#include "bcfl/dataio.hpp"
#include "bcfl/ledger.hpp"
#include "bcfl/neuralnet.hpp"
#include "bcfl/random.hpp"
#include "bcfl/secure_agg.hpp"
#include "bcfl/secure_inference.hpp"

namespace bcfl {

// ---------------------------------------------------------------------------
// Attacks.

// Relabels the first ceil(fraction * count(source)) source-class samples,
// taken in seeded-shuffle order, as `target`.
inline Dataset flip_labels(Dataset shard, uint32_t source, uint32_t target, double fraction, uint64_t seed) {
  if (source == target) throw InvalidArgument("source and target class must differ");
  if (source >= shard.class_count || target >= shard.class_count) throw InvalidArgument("class out of range");
  if (!(fraction > 0 && fraction <= 1)) throw InvalidArgument("flip fraction must lie in (0, 1]");
  std::vector<size_t> idx;
  for (size_t i = 0; i < shard.size(); ++i) {
    if (shard.labels[i] == source) idx.push_back(i);
  }
  if (idx.empty()) throw InvalidArgument("source class absent from shard");
  Rng rng(seed);
  shuffle_in_place(std::span<size_t>(idx), rng);
  const auto count = static_cast<size_t>(std::ceil(fraction * static_cast<double>(idx.size()) - 1e-9));
  for (size_t k = 0; k < count; ++k) shard.labels[idx[k]] = target;
  return shard;
}

inline Model scale_params(const Model& m, double gamma) {
  if (!(gamma > 0)) throw InvalidArgument("scaling factor must be positive");
  auto p = flatten_params(m);
  for (auto& v : p) v *= gamma;
  return with_params(m, p);
}

// floor(fraction * count) clients, chosen by seed, in ascending id order.
inline std::vector<uint32_t> select_malicious(std::vector<uint32_t> client_ids, double fraction, uint64_t seed) {
  if (!(fraction >= 0 && fraction <= 0.5)) throw InvalidArgument("malicious fraction must lie in [0, 0.5]");
  const auto count = static_cast<size_t>(std::floor(fraction * static_cast<double>(client_ids.size()) + 1e-9));
  Rng rng(seed);
  shuffle_in_place(std::span<uint32_t>(client_ids), rng);
  client_ids.resize(count);
  std::sort(client_ids.begin(), client_ids.end());
  return client_ids;
}

// ---------------------------------------------------------------------------
// Setup.

struct ExperimentData {
  Dataset verify;  // the verifier's trusted set
  Dataset test;    // held out, for reporting global accuracy
  std::vector<Dataset> shards;
};

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  const uint64_t master = cfg.seeds.master;
  Dataset all;
  if (cfg.data.source == "synthetic") {
    all = gen_synthetic(SyntheticSpec{cfg.data.classes, cfg.data.dims, cfg.data.per_class,
                                      derive_seed(master, "data"), cfg.data.separation});
  } else if (cfg.data.source == "idx") {
    all = load_idx(cfg.data.images, cfg.data.labels, cfg.data.classes);
  } else {
    all = load_csv(cfg.data.csv, cfg.data.classes);
  }
  if (cfg.model.kind == "mlp") all = flattened(std::move(all));
  if (cfg.model.kind == "cnn" && all.sample_shape.size() != 3) {
    throw ConfigError("model.kind", "cnn needs image-shaped samples");
  }
  const size_t held = cfg.data.verify_samples + cfg.data.test_samples;
  if (all.size() < held + cfg.federation.clients) {
    throw ConfigError("data", "too few samples for the verify/test splits and " +
                                  std::to_string(cfg.federation.clients) + " clients");
  }
  const auto parts =
      split_counts(all, {cfg.data.verify_samples, cfg.data.test_samples, all.size() - held}, derive_seed(master, "split"));
  return {parts[0], parts[1], partition(parts[2], cfg.federation.clients, derive_seed(master, "partition"))};
}

inline Model initial_model(const ExperimentConfig& cfg, const Shape& sample_shape, uint32_t classes) {
  const uint64_t seed = derive_seed(cfg.seeds.master, "init");
  if (cfg.model.kind == "mlp") {
    return make_mlp(static_cast<uint32_t>(shape_size(sample_shape)), cfg.model.hidden, classes, seed);
  }
  return make_cnn(static_cast<uint32_t>(sample_shape[0]), static_cast<uint32_t>(sample_shape[1]),
                  static_cast<uint32_t>(sample_shape[2]), cfg.model.filters, cfg.model.kernel, classes, seed);
}

inline TrainConfig train_config(const ExperimentConfig& cfg, uint64_t seed) {
  TrainConfig t;
  t.learning_rate = cfg.train.learning_rate;
  t.epochs = cfg.train.epochs;
  t.batch_size = cfg.train.batch_size;
  t.optimizer = cfg.train.optimizer == "adam" ? Optimizer::adam : Optimizer::sgd;
  t.seed = seed;
  return t;
}

inline double worst_class_accuracy(const Model& m, const Dataset& data) {
  const auto per_class = per_class_accuracy(predict(m, data), data.labels, data.class_count);
  return *std::min_element(per_class.begin(), per_class.end());
}

// ---------------------------------------------------------------------------
// Rounds.

struct SimOptions {
  bool plaintext_debug = false;  // plaintext verification and averaging
  std::string out_dir;           // empty: keep everything in memory
};

struct ClientVerdict {
  uint32_t client_id = 0;
  bool malicious = false;
  Verdict verdict;
};

struct RoundMetrics {
  uint32_t round = 0;
  uint32_t attempts = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<double> client_accuracy;  // test accuracy per trained local model, by client order
  std::vector<ClientVerdict> verdicts;
  std::vector<uint32_t> aggregated;
  double threshold = 0;
  double global_accuracy = 0;
  double global_worst_class = 0;
  std::string committed_digest;
  size_t consensus_support = 0;
  uint64_t block_index = 0;
  struct {
    double train = 0, verify = 0, aggregate = 0, mine = 0;
  } timings_ms;

  nlohmann::json to_json() const {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& cv : verdicts) {
      v.push_back({{"client", cv.client_id},
                   {"malicious", cv.malicious},
                   {"encrypted_accuracy", cv.verdict.encrypted_accuracy},
                   {"worst_class_accuracy", cv.verdict.worst_class_accuracy},
                   {"score", cv.verdict.score},
                   {"accepted", cv.verdict.accepted}});
    }
    return {{"round", round},
            {"attempts", attempts},
            {"aborted", aborted},
            {"abort_reason", abort_reason},
            {"client_accuracy", client_accuracy},
            {"threshold", threshold},
            {"verdicts", v},
            {"aggregated", aggregated},
            {"global_accuracy", global_accuracy},
            {"global_worst_class_accuracy", global_worst_class},
            {"committed_digest", committed_digest},
            {"consensus_support", consensus_support},
            {"block_index", block_index}};
  }

  nlohmann::json timings_json() const {
    return {{"round", round},
            {"train_ms", timings_ms.train},
            {"verify_ms", timings_ms.verify},
            {"aggregate_ms", timings_ms.aggregate},
            {"mine_ms", timings_ms.mine}};
  }
};

struct SimState {
  ExperimentConfig cfg;
  ExperimentData data;
  Model global;
  Chain chain;
  uint32_t round = 0;  // last committed round
  std::set<uint32_t> malicious;
  std::set<uint32_t> banned;
  std::vector<Verdict> verdict_log;  // every verdict, with timings

  std::vector<uint32_t> client_ids() const {
    std::vector<uint32_t> ids;
    for (uint32_t c = 0; c < data.shards.size(); ++c) ids.push_back(c);
    return ids;
  }
};

inline SimState init_state(const ExperimentConfig& cfg) {
  cfg.validate();
  SimState s{cfg, prepare_data(cfg), {}, Chain(cfg.ledger.difficulty), 0, {}, {}, {}};
  s.global = initial_model(cfg, s.data.verify.sample_shape, s.data.verify.class_count);
  const auto bad = select_malicious(s.client_ids(), cfg.attack.malicious_fraction, derive_seed(cfg.seeds.master, "malicious"));
  s.malicious.insert(bad.begin(), bad.end());
  return s;
}

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
}

inline uint64_t client_stream(uint32_t round, uint32_t client) { return (static_cast<uint64_t>(round) << 32) | client; }

inline Model plaintext_mean(const std::vector<Model>& models) {
  std::vector<double> acc(models.front().param_count(), 0.0);
  for (const auto& m : models) {
    const auto p = flatten_params(m);
    for (size_t j = 0; j < p.size(); ++j) acc[j] += p[j];
  }
  for (auto& v : acc) v /= static_cast<double>(models.size());
  return with_params(models.front(), acc);
}

inline std::string model_ref(uint32_t round) { return "models/round-" + std::to_string(round) + ".bcfm"; }

}  // namespace detail

// Trains every enrolled client from the current global model.
inline std::vector<std::pair<uint32_t, Model>> train_clients(const SimState& s, uint32_t round) {
  const auto& cfg = s.cfg;
  std::vector<std::pair<uint32_t, Model>> out;
  for (uint32_t c : s.client_ids()) {
    if (s.banned.count(c)) continue;
    const uint64_t stream = detail::client_stream(round, c);
    Dataset shard = s.data.shards[c];
    const bool bad = s.malicious.count(c) > 0;
    if (bad) {
      shard = flip_labels(std::move(shard), cfg.attack.source_class, cfg.attack.target_class, cfg.attack.flip_fraction,
                          derive_seed(cfg.seeds.master, "flip", c));
    }
    Model local = train_local(s.global, shard, train_config(cfg, derive_seed(cfg.seeds.master, "train", stream)));
    if (bad && cfg.attack.scaling != 1.0) local = scale_params(local, cfg.attack.scaling);
    out.emplace_back(c, std::move(local));
  }
  return out;
}

// One attempt at round `s.round + 1`. Commits to `s` only on success.
inline RoundMetrics run_round_attempt(SimState& s, const SimOptions& opt, uint32_t attempt) {
  const auto& cfg = s.cfg;
  const uint32_t round = s.round + 1;
  const uint64_t master = cfg.seeds.master;
  RoundMetrics rm;
  rm.round = round;
  rm.attempts = attempt;

  auto t = std::chrono::steady_clock::now();
  const auto locals = train_clients(s, round);
  for (const auto& [c, m] : locals) rm.client_accuracy.push_back(evaluate(m, s.data.test));
  rm.timings_ms.train = detail::ms_since(t);

  // Verification.
  t = std::chrono::steady_clock::now();
  const VerifierMetric metric = parse_metric(cfg.verifier.metric);
  std::vector<const std::pair<uint32_t, Model>*> accepted;
  std::vector<uint32_t> rejected;
  if (cfg.verifier.enabled) {
    const double prev = metric == VerifierMetric::accuracy ? evaluate(s.global, s.data.verify)
                                                           : worst_class_accuracy(s.global, s.data.verify);
    rm.threshold = cfg.verifier.threshold ? *cfg.verifier.threshold
                                          : relative_threshold(prev, s.data.verify.class_count,
                                                               cfg.verifier.relative_factor, cfg.verifier.margin);
    FssConfig fss;
    fss.bit_width = cfg.verifier.bit_width;
    for (const auto& entry : locals) {
      const auto& [c, m] = entry;
      VerifyRequest req{"r" + std::to_string(round) + "-c" + std::to_string(c), round, rm.threshold, metric, fss};
      Verdict v;
      if (opt.plaintext_debug) {
        const auto start = std::chrono::steady_clock::now();
        v.model_id = req.model_id;
        v.round = round;
        v.metric = metric;
        v.encrypted_accuracy = evaluate(m, s.data.verify);
        v.worst_class_accuracy = worst_class_accuracy(m, s.data.verify);
        v.score = metric == VerifierMetric::accuracy ? v.encrypted_accuracy : v.worst_class_accuracy;
        v.threshold = rm.threshold;
        v.accepted = v.score >= rm.threshold;
        v.wall_time_ms = detail::ms_since(start);
      } else {
        Dealer dealer(derive_seed(master, "verify", detail::client_stream(round, c)));
        v = verify_local_model(m, s.data.verify, req, dealer);
      }
      rm.verdicts.push_back({c, s.malicious.count(c) > 0, v});
      if (v.accepted) {
        accepted.push_back(&entry);
      } else {
        rejected.push_back(c);
      }
    }
  } else {
    for (const auto& entry : locals) accepted.push_back(&entry);
  }
  rm.timings_ms.verify = detail::ms_since(t);
  for (const auto* e : accepted) rm.aggregated.push_back(e->first);
  if (accepted.empty()) {
    rm.aborted = true;
    rm.abort_reason = "no local model passed verification";
    return rm;
  }

  // Aggregation.
  t = std::chrono::steady_clock::now();
  Model global;
  if (opt.plaintext_debug) {
    std::vector<Model> models;
    for (const auto* e : accepted) models.push_back(e->second);
    global = detail::plaintext_mean(models);
  } else {
    std::set<uint32_t> ids(rm.aggregated.begin(), rm.aggregated.end());
    AggregationState agg(round, ids, cfg.aggregation.nodes);
    for (const auto* e : accepted) {
      Dealer dealer(derive_seed(master, "share", detail::client_stream(round, e->first)));
      agg.receive(share_model_params(e->second, cfg.aggregation.nodes, dealer, e->first, round,
                                     std::max<size_t>(accepted.size(), 1)));
    }
    const auto partials = agg.partial_sums();
    global = finalize_global(partials, accepted.size(), s.global);
  }
  rm.timings_ms.aggregate = detail::ms_since(t);

  // Every node reconstructs the global model and votes its digest; faulty
  // nodes vote for a corrupted copy.
  t = std::chrono::steady_clock::now();
  const auto bytes = serialize(global);
  const Digest honest = sha256(bytes);
  const bool faulty_now = cfg.aggregation.faulty_nodes > 0 && (!cfg.aggregation.faulty_transient || attempt == 1);
  std::vector<NodeVote> votes;
  for (uint32_t n = 0; n < cfg.aggregation.nodes; ++n) {
    Digest d = honest;
    if (faulty_now && n >= cfg.aggregation.nodes - cfg.aggregation.faulty_nodes) {
      auto corrupt = bytes;
      corrupt.back() ^= static_cast<uint8_t>(n + 1);
      d = sha256(corrupt);
    }
    votes.push_back({n, round, d});
  }
  const ConsensusResult cr = consensus_commit(votes, cfg.aggregation.nodes);
  rm.consensus_support = cr.support;
  if (!cr.committed || *cr.digest != honest) {
    rm.aborted = true;
    rm.abort_reason = "no strict majority on the global model digest";
    rm.timings_ms.mine = detail::ms_since(t);
    return rm;
  }
  const Block block = mine_block({round, honest, detail::model_ref(round)}, s.chain);
  s.chain.append(block);
  rm.timings_ms.mine = detail::ms_since(t);

  if (!opt.out_dir.empty()) {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir / "models");
    std::ofstream(dir / detail::model_ref(round), std::ios::binary | std::ios::trunc)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    append_block_to_file(block, (dir / "chain.bin").string());
  }

  // Clients fetch the committed model and check it against the chain.
  if (!verify_global(bytes, s.chain, round)) throw ProtocolError("fetched global model does not match the chain");

  for (const auto& cv : rm.verdicts) s.verdict_log.push_back(cv.verdict);
  if (cfg.verifier.ban_on_reject) s.banned.insert(rejected.begin(), rejected.end());
  s.global = std::move(global);
  s.round = round;
  rm.committed_digest = to_hex(honest);
  rm.block_index = block.index;
  rm.global_accuracy = evaluate(s.global, s.data.test);
  rm.global_worst_class = worst_class_accuracy(s.global, s.data.test);
  return rm;
}

// A round that aborts is retried once with the same inputs.
inline RoundMetrics run_round(SimState& s, const SimOptions& opt = {}) {
  RoundMetrics rm = run_round_attempt(s, opt, 1);
  if (rm.aborted) rm = run_round_attempt(s, opt, 2);
  return rm;
}

// ---------------------------------------------------------------------------
// Experiments.

struct ExperimentSummary {
  std::string name;
  uint32_t clients = 0;
  std::vector<uint32_t> malicious_ids;
  uint32_t rounds_planned = 0;
  uint32_t rounds_completed = 0;
  bool aborted = false;
  double initial_accuracy = 0;
  double final_accuracy = 0;
  double worst_round_accuracy = 0;
  double recovery_delta = 0;  // final minus worst committed-round accuracy
  size_t true_positives = 0, false_negatives = 0, false_positives = 0, true_negatives = 0;
  std::optional<double> detector_recall;
  std::optional<double> detector_fpr;
  std::string final_digest;

  nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"name", name},
            {"clients", clients},
            {"malicious_count", malicious_ids.size()},
            {"malicious_ids", malicious_ids},
            {"rounds_planned", rounds_planned},
            {"rounds_completed", rounds_completed},
            {"aborted", aborted},
            {"initial_accuracy", initial_accuracy},
            {"final_accuracy", final_accuracy},
            {"worst_round_accuracy", worst_round_accuracy},
            {"recovery_delta", recovery_delta},
            {"true_positives", true_positives},
            {"false_negatives", false_negatives},
            {"false_positives", false_positives},
            {"true_negatives", true_negatives},
            {"detector_recall", opt(detector_recall)},
            {"detector_false_positive_rate", opt(detector_fpr)},
            {"final_digest", final_digest}};
  }

  static std::string csv_header() {
    return "name,clients,malicious_count,rounds_planned,rounds_completed,aborted,initial_accuracy,final_accuracy,"
           "worst_round_accuracy,recovery_delta,true_positives,false_negatives,false_positives,true_negatives,"
           "detector_recall,detector_false_positive_rate,final_digest";
  }

  std::string csv_row() const {
    auto num = [](double v) {
      std::ostringstream os;
      os.precision(6);
      os << std::fixed << v;
      return os.str();
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    std::ostringstream os;
    os << name << ',' << clients << ',' << malicious_ids.size() << ',' << rounds_planned << ',' << rounds_completed
       << ',' << (aborted ? 1 : 0) << ',' << num(initial_accuracy) << ',' << num(final_accuracy) << ','
       << num(worst_round_accuracy) << ',' << num(recovery_delta) << ',' << true_positives << ',' << false_negatives
       << ',' << false_positives << ',' << true_negatives << ',' << opt(detector_recall) << ',' << opt(detector_fpr)
       << ',' << final_digest;
    return os.str();
  }
};

struct ExperimentResult {
  ExperimentSummary summary;
  std::vector<RoundMetrics> rounds;
  Model final_model;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const SimOptions& opt = {}) {
  SimState s = init_state(cfg);
  std::ofstream metrics, timings, verdicts;
  if (!opt.out_dir.empty()) {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    std::filesystem::remove_all(dir / "models");
    save_chain(s.chain, (dir / "chain.bin").string());
    metrics.open(dir / "metrics.jsonl", std::ios::trunc);
    timings.open(dir / "timings.jsonl", std::ios::trunc);
    verdicts.open(dir / "verdicts.jsonl", std::ios::trunc);
    std::ofstream(dir / "config.resolved.json", std::ios::trunc) << config_to_json(cfg).dump(2) << "\n";
  }

  ExperimentResult res;
  auto& sum = res.summary;
  sum.name = cfg.name;
  sum.clients = cfg.federation.clients;
  sum.malicious_ids.assign(s.malicious.begin(), s.malicious.end());
  sum.rounds_planned = cfg.federation.rounds;
  sum.initial_accuracy = evaluate(s.global, s.data.test);
  sum.worst_round_accuracy = 1.0;

  for (uint32_t r = 0; r < cfg.federation.rounds; ++r) {
    RoundMetrics rm = run_round(s, opt);
    if (metrics.is_open()) {
      metrics << rm.to_json().dump() << "\n";
      timings << rm.timings_json().dump() << "\n";
      for (const auto& cv : rm.verdicts) {
        auto j = cv.verdict.to_json();
        j["attempt"] = rm.attempts;
        verdicts << j.dump() << "\n";
      }
    }
    const bool aborted = rm.aborted;
    if (!aborted) {
      for (const auto& cv : rm.verdicts) {
        if (cv.malicious) {
          (cv.verdict.accepted ? sum.false_negatives : sum.true_positives)++;
        } else {
          (cv.verdict.accepted ? sum.true_negatives : sum.false_positives)++;
        }
      }
      sum.worst_round_accuracy = std::min(sum.worst_round_accuracy, rm.global_accuracy);
      sum.rounds_completed = rm.round;
    }
    res.rounds.push_back(std::move(rm));
    if (aborted) {
      sum.aborted = true;
      break;
    }
  }

  sum.final_accuracy = evaluate(s.global, s.data.test);
  if (sum.rounds_completed == 0) sum.worst_round_accuracy = sum.final_accuracy;
  sum.recovery_delta = sum.final_accuracy - sum.worst_round_accuracy;
  if (sum.true_positives + sum.false_negatives > 0) {
    sum.detector_recall = static_cast<double>(sum.true_positives) / (sum.true_positives + sum.false_negatives);
  }
  if (sum.false_positives + sum.true_negatives > 0) {
    sum.detector_fpr = static_cast<double>(sum.false_positives) / (sum.false_positives + sum.true_negatives);
  }
  sum.final_digest = to_hex(digest(s.global).sha256);
  res.final_model = s.global;

  if (!opt.out_dir.empty()) {
    const std::filesystem::path dir(opt.out_dir);
    std::ofstream(dir / "summary.json", std::ios::trunc) << sum.to_json().dump(2) << "\n";
    std::ofstream(dir / "summary.csv", std::ios::trunc) << ExperimentSummary::csv_header() << "\n" << sum.csv_row() << "\n";
  }
  return res;
}

}  // namespace bcfl
