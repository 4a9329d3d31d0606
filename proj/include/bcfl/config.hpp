#pragma once

// Experiment configuration: a JSON document with fixed sections. Unknown
// keys and type errors are reported with their dotted field path.
//
// Environment overrides: BCFL_<SECTION>__<KEY>=<value>, e.g.
// BCFL_FEDERATION__ROUNDS=5 or BCFL_VERIFIER__ENABLED=false. The value is
// parsed as JSON when possible, otherwise taken as a string.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "bcfl/errors.hpp"

extern char** environ;

namespace bcfl {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | idx | csv
  uint32_t classes = 4;
  uint32_t dims = 32;
  uint32_t per_class = 500;
  double separation = 3.0;
  size_t verify_samples = 200;
  size_t test_samples = 400;
  std::string images;  // idx
  std::string labels;  // idx
  std::string csv;     // csv
};

struct ModelConfig {
  std::string kind = "mlp";  // mlp | cnn
  uint32_t hidden = 16;
  uint32_t filters = 4;
  uint32_t kernel = 3;
};

struct TrainSection {
  double learning_rate = 0.1;
  uint32_t epochs = 3;
  uint32_t batch_size = 8;
  std::string optimizer = "sgd";
};

struct FederationConfig {
  uint32_t clients = 10;
  uint32_t rounds = 25;
};

struct AttackConfig {
  double malicious_fraction = 0.0;
  uint32_t source_class = 0;
  uint32_t target_class = 1;
  double flip_fraction = 1.0;
  double scaling = 1.0;
};

struct VerifierConfig {
  bool enabled = true;
  std::string metric = "worst_class";  // worst_class | accuracy
  std::optional<double> threshold;     // absolute override of the relative rule
  double relative_factor = 0.5;
  double margin = 0.1;
  uint32_t bit_width = 32;
  bool ban_on_reject = false;
};

struct AggregationConfig {
  uint32_t nodes = 5;
  uint32_t faulty_nodes = 0;
  bool faulty_transient = false;  // faults only on a round's first attempt
};

struct LedgerConfig {
  uint32_t difficulty = 2;
};

struct SeedConfig {
  uint64_t master = 1;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  ModelConfig model;
  TrainSection train;
  FederationConfig federation;
  AttackConfig attack;
  VerifierConfig verifier;
  AggregationConfig aggregation;
  LedgerConfig ledger;
  SeedConfig seeds;

  void validate() const;
};

namespace detail {

class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<int64_t>() < 0)) {
          throw ConfigError(at(key), "expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError(at(key), "expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(at(key), "expected a string");
      }
      out = v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(at(key), e.what());
    }
  }

  void get(const std::string& key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    double v = 0;
    get(key, v);
    out = v;
  }

  template <typename Fn>
  void section(const std::string& key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Fields sub(j_.at(key), at(key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(at(key), "unknown key");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  detail::Fields root(j, "");
  root.get("name", c.name);
  root.section("data", [&](detail::Fields& f) {
    f.get("source", c.data.source);
    f.get("classes", c.data.classes);
    f.get("dims", c.data.dims);
    f.get("per_class", c.data.per_class);
    f.get("separation", c.data.separation);
    f.get("verify_samples", c.data.verify_samples);
    f.get("test_samples", c.data.test_samples);
    f.get("images", c.data.images);
    f.get("labels", c.data.labels);
    f.get("csv", c.data.csv);
  });
  root.section("model", [&](detail::Fields& f) {
    f.get("kind", c.model.kind);
    f.get("hidden", c.model.hidden);
    f.get("filters", c.model.filters);
    f.get("kernel", c.model.kernel);
  });
  root.section("train", [&](detail::Fields& f) {
    f.get("learning_rate", c.train.learning_rate);
    f.get("epochs", c.train.epochs);
    f.get("batch_size", c.train.batch_size);
    f.get("optimizer", c.train.optimizer);
  });
  root.section("federation", [&](detail::Fields& f) {
    f.get("clients", c.federation.clients);
    f.get("rounds", c.federation.rounds);
  });
  root.section("attack", [&](detail::Fields& f) {
    f.get("malicious_fraction", c.attack.malicious_fraction);
    f.get("source_class", c.attack.source_class);
    f.get("target_class", c.attack.target_class);
    f.get("flip_fraction", c.attack.flip_fraction);
    f.get("scaling", c.attack.scaling);
  });
  root.section("verifier", [&](detail::Fields& f) {
    f.get("enabled", c.verifier.enabled);
    f.get("metric", c.verifier.metric);
    f.get("threshold", c.verifier.threshold);
    f.get("relative_factor", c.verifier.relative_factor);
    f.get("margin", c.verifier.margin);
    f.get("bit_width", c.verifier.bit_width);
    f.get("ban_on_reject", c.verifier.ban_on_reject);
  });
  root.section("aggregation", [&](detail::Fields& f) {
    f.get("nodes", c.aggregation.nodes);
    f.get("faulty_nodes", c.aggregation.faulty_nodes);
    f.get("faulty_transient", c.aggregation.faulty_transient);
  });
  root.section("ledger", [&](detail::Fields& f) { f.get("difficulty", c.ledger.difficulty); });
  root.section("seeds", [&](detail::Fields& f) { f.get("master", c.seeds.master); });
  root.finish();
  c.validate();
  return c;
}

inline void ExperimentConfig::validate() const {
  using detail::require;
  require(data.source == "synthetic" || data.source == "idx" || data.source == "csv", "data.source",
          "must be synthetic, idx or csv");
  require(data.classes >= 2, "data.classes", "must be at least 2");
  require(data.dims >= 1, "data.dims", "must be positive");
  require(data.per_class >= 1, "data.per_class", "must be positive");
  require(data.separation > 0, "data.separation", "must be positive");
  require(data.verify_samples >= 1, "data.verify_samples", "must be positive");
  require(data.test_samples >= 1, "data.test_samples", "must be positive");
  require(data.source != "idx" || (!data.images.empty() && !data.labels.empty()), "data.images",
          "idx source needs images and labels paths");
  require(data.source != "csv" || !data.csv.empty(), "data.csv", "csv source needs a path");
  require(model.kind == "mlp" || model.kind == "cnn", "model.kind", "must be mlp or cnn");
  require(model.hidden >= 1, "model.hidden", "must be positive");
  require(model.filters >= 1, "model.filters", "must be positive");
  require(model.kernel >= 1, "model.kernel", "must be positive");
  require(train.learning_rate >= 0, "train.learning_rate", "must be non-negative");
  require(train.batch_size >= 1, "train.batch_size", "must be positive");
  require(train.optimizer == "sgd" || train.optimizer == "adam", "train.optimizer", "must be sgd or adam");
  require(federation.clients >= 1, "federation.clients", "must be positive");
  require(federation.rounds >= 1, "federation.rounds", "must be positive");
  require(attack.malicious_fraction >= 0 && attack.malicious_fraction <= 0.5, "attack.malicious_fraction",
          "must lie in [0, 0.5]");
  require(attack.source_class < data.classes, "attack.source_class", "not a valid class");
  require(attack.target_class < data.classes, "attack.target_class", "not a valid class");
  require(attack.source_class != attack.target_class, "attack.target_class", "must differ from source_class");
  require(attack.flip_fraction > 0 && attack.flip_fraction <= 1, "attack.flip_fraction", "must lie in (0, 1]");
  require(attack.scaling > 0, "attack.scaling", "must be positive");
  require(verifier.metric == "worst_class" || verifier.metric == "accuracy", "verifier.metric",
          "must be worst_class or accuracy");
  require(!verifier.threshold || (*verifier.threshold >= 0 && *verifier.threshold <= 1), "verifier.threshold",
          "must lie in [0, 1]");
  require(verifier.relative_factor >= 0, "verifier.relative_factor", "must be non-negative");
  require(verifier.bit_width == 8 || verifier.bit_width == 12 || verifier.bit_width == 16 || verifier.bit_width == 32,
          "verifier.bit_width", "must be 8, 12, 16 or 32");
  require(aggregation.nodes >= 2, "aggregation.nodes", "must be at least 2");
  require(aggregation.faulty_nodes <= aggregation.nodes, "aggregation.faulty_nodes", "exceeds node count");
  require(ledger.difficulty <= 6, "ledger.difficulty", "must be at most 6");
}

// Applies BCFL_<SECTION>__<KEY> (or BCFL_<KEY> for top-level keys) from the
// given environment block.
inline void apply_env_overrides(nlohmann::json& j, char** env) {
  if (!env) return;
  for (char** e = env; *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind("BCFL_", 0) != 0) continue;
    const size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(5, eq - 5);
    const std::string raw = entry.substr(eq + 1);
    for (auto& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    const size_t sep = name.find("__");
    if (sep == std::string::npos) {
      if (name == "config" || name == "out_dir" || name == "seed" || name == "plaintext_debug") continue;  // CLI flags
      j[name] = value;
    } else {
      j[name.substr(0, sep)][name.substr(sep + 2)] = value;
    }
  }
}

inline ExperimentConfig load_config(const std::string& path, bool use_env = true) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path, "not valid JSON");
  if (use_env) apply_env_overrides(j, environ);
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json verifier = {{"enabled", c.verifier.enabled},
                             {"metric", c.verifier.metric},
                             {"relative_factor", c.verifier.relative_factor},
                             {"margin", c.verifier.margin},
                             {"bit_width", c.verifier.bit_width},
                             {"ban_on_reject", c.verifier.ban_on_reject}};
  verifier["threshold"] = c.verifier.threshold ? nlohmann::json(*c.verifier.threshold) : nlohmann::json(nullptr);
  return {{"name", c.name},
          {"data",
           {{"source", c.data.source},
            {"classes", c.data.classes},
            {"dims", c.data.dims},
            {"per_class", c.data.per_class},
            {"separation", c.data.separation},
            {"verify_samples", c.data.verify_samples},
            {"test_samples", c.data.test_samples},
            {"images", c.data.images},
            {"labels", c.data.labels},
            {"csv", c.data.csv}}},
          {"model", {{"kind", c.model.kind}, {"hidden", c.model.hidden}, {"filters", c.model.filters},
                     {"kernel", c.model.kernel}}},
          {"train", {{"learning_rate", c.train.learning_rate}, {"epochs", c.train.epochs},
                     {"batch_size", c.train.batch_size}, {"optimizer", c.train.optimizer}}},
          {"federation", {{"clients", c.federation.clients}, {"rounds", c.federation.rounds}}},
          {"attack", {{"malicious_fraction", c.attack.malicious_fraction}, {"source_class", c.attack.source_class},
                      {"target_class", c.attack.target_class}, {"flip_fraction", c.attack.flip_fraction},
                      {"scaling", c.attack.scaling}}},
          {"verifier", verifier},
          {"aggregation", {{"nodes", c.aggregation.nodes}, {"faulty_nodes", c.aggregation.faulty_nodes},
                           {"faulty_transient", c.aggregation.faulty_transient}}},
          {"ledger", {{"difficulty", c.ledger.difficulty}}},
          {"seeds", {{"master", c.seeds.master}}}};
}

}  // namespace bcfl
