#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bcfl/config.hpp"
#include "bcfl/fl_sim.hpp"
#include "bcfl/fss.hpp"
#include "bcfl/ledger.hpp"
#include "bcfl/sharing.hpp"

namespace bcfl {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitAborted = 3;

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of empty sample");
  std::sort(v.begin(), v.end());
  const size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline std::vector<uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace detail

// ---- run ----

struct RunOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_dir;  // empty: runs/<name>-seed<seed>
  bool plaintext_debug = false;
  bool use_env = true;
};

inline void print_summary(const ExperimentSummary& s, const std::string& out_dir, std::ostream& out) {
  auto row = [&](const std::string& k, const std::string& v) { out << "  " << std::left << std::setw(22) << k << v << "\n"; };
  std::string ids;
  for (size_t i = 0; i < s.malicious_ids.size(); ++i) ids += (i ? "," : "") + std::to_string(s.malicious_ids[i]);
  out << "experiment " << s.name << "\n";
  row("clients", std::to_string(s.clients));
  row("malicious", std::to_string(s.malicious_ids.size()) + (ids.empty() ? "" : " [" + ids + "]"));
  row("rounds", std::to_string(s.rounds_completed) + "/" + std::to_string(s.rounds_planned) +
                    (s.aborted ? " (aborted)" : ""));
  row("initial accuracy", detail::fixed(s.initial_accuracy, 4));
  row("final accuracy", detail::fixed(s.final_accuracy, 4));
  row("worst round accuracy", detail::fixed(s.worst_round_accuracy, 4));
  row("recovery delta", detail::fixed(s.recovery_delta, 4));
  row("detector tp/fn/fp/tn", std::to_string(s.true_positives) + "/" + std::to_string(s.false_negatives) + "/" +
                                  std::to_string(s.false_positives) + "/" + std::to_string(s.true_negatives));
  row("detector recall", s.detector_recall ? detail::fixed(*s.detector_recall, 4) : "n/a");
  row("detector fpr", s.detector_fpr ? detail::fixed(*s.detector_fpr, 4) : "n/a");
  row("final digest", s.final_digest);
  if (!out_dir.empty()) row("artifacts", out_dir);
}

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(opt.config_path, opt.use_env);
    if (opt.seed) {
      cfg.seeds.master = *opt.seed;
      cfg.validate();
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string dir =
      opt.out_dir.empty() ? "runs/" + cfg.name + "-seed" + std::to_string(cfg.seeds.master) : opt.out_dir;
  ExperimentResult res;
  try {
    res = run_experiment(cfg, {opt.plaintext_debug, dir});
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  print_summary(res.summary, dir, out);
  if (res.summary.aborted) {
    const auto& last = res.rounds.back();
    err << "experiment aborted in round " << last.round << ": " << last.abort_reason << "\n";
    return kExitAborted;
  }
  return kExitOk;
}

// ---- selftest ----

struct SuiteResult {
  std::string name;
  size_t checks = 0;
  size_t failures = 0;
  double ms = 0;
  bool passed() const { return failures == 0; }
};

struct SelftestOptions {
  std::string inject_fault;  // suite name whose results get perturbed (test hook)
  uint64_t seed = 1;
};

namespace detail {

struct SuiteRun {
  SuiteResult r;
  bool fault = false;
  void check(uint64_t got, uint64_t want) {
    ++r.checks;
    if (fault && r.checks == 1) ++got;
    r.failures += got != want;
  }
};

// Q = 11 exhaustive sum protocol; 10^4 round trips at 2^61-1.
inline void suite_sharing(SuiteRun& s, Dealer& dealer, Rng& rng) {
  const Modulus q11 = Modulus::toy_prime(11);
  for (uint64_t u = 0; u < 11; ++u) {
    for (uint64_t v = 0; v < 11; ++v) {
      const std::array<uint64_t, 1> a{u}, b{v};
      const auto us = split(a, 2, q11, dealer), vs = split(b, 2, q11, dealer);
      std::vector<ShareVector> sums;
      for (size_t p = 0; p < 2; ++p) {
        const std::array<ShareVector, 2> held{us[p], vs[p]};
        sums.push_back(local_sum(held));
      }
      s.check(reconstruct(sums)[0], (u + v) % 11);
    }
  }
  const Modulus q = Modulus::mersenne61();
  const size_t parties[] = {2, 3, 5, 10};
  for (int t = 0; t < 10000; ++t) {
    const std::array<uint64_t, 1> secret{q.reduce(rng())};
    s.check(reconstruct(split(secret, parties[t % 4], q, dealer))[0], secret[0]);
  }
}

// DCF over all (alpha, x) at 8 bits, then shared_sign over the guarded range.
inline void suite_dcf(SuiteRun& s, Dealer& dealer) {
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  for (uint64_t alpha = 0; alpha < 256; ++alpha) {
    const auto keys = dcf_gen(alpha, cfg, dealer);
    for (uint64_t x = 0; x < 256; ++x) {
      const uint64_t got = cfg.output.add(dcf_eval(0, keys.k0, x).value, dcf_eval(1, keys.k1, x).value);
      s.check(got, x < alpha ? 1 : 0);
    }
  }
  const Modulus ring = Modulus::power_of_two(64);
  const FssConfig sign_cfg{8, ring};
  std::vector<int64_t> ys;
  for (int64_t y = -63; y < 64; ++y) ys.push_back(y);
  std::vector<uint64_t> enc;
  for (int64_t y : ys) enc.push_back(ring.from_signed(y));
  const auto bits = reconstruct(shared_sign(split_pair(enc, ring, dealer), sign_cfg, dealer));
  for (size_t j = 0; j < ys.size(); ++j) s.check(bits[j], ys[j] >= 0 ? 1 : 0);
}

// 10^4 integer products mod 2^61-1; 10^4 fixed-point products within one unit.
inline void suite_beaver(SuiteRun& s, Dealer& dealer, Rng& rng) {
  const Modulus q = Modulus::mersenne61();
  const size_t count = 10000;
  std::vector<uint64_t> xs(count), ys(count);
  for (size_t j = 0; j < count; ++j) {
    xs[j] = q.reduce(rng());
    ys[j] = q.reduce(rng());
  }
  auto t = make_beaver_triple(count, q, dealer);
  const auto z = reconstruct(beaver_mul(split_pair(xs, q, dealer), split_pair(ys, q, dealer), t));
  for (size_t j = 0; j < count; ++j) {
    s.check(z[j], static_cast<uint64_t>(static_cast<unsigned __int128>(xs[j]) * ys[j] % q.value()));
  }

  const auto fp = inference_fixed_point();
  const Modulus& m = fp.modulus;
  std::vector<int64_t> a(count), b(count);
  std::vector<uint64_t> ea(count), eb(count);
  for (size_t j = 0; j < count; ++j) {
    a[j] = static_cast<int64_t>(rng() % 2000001) - 1000000;  // [-100, 100] at 4 decimals
    b[j] = static_cast<int64_t>(rng() % 2000001) - 1000000;
    ea[j] = m.from_signed(a[j]);
    eb[j] = m.from_signed(b[j]);
  }
  auto tf = make_beaver_triple(count, m, dealer);
  const auto prod = reconstruct(truncate_shares(beaver_mul(split_pair(ea, m, dealer), split_pair(eb, m, dealer), tf), fp));
  for (size_t j = 0; j < count; ++j) {
    // exact product in units of 10^-8, compared in units of 10^-4
    const __int128 exact = static_cast<__int128>(a[j]) * b[j];
    const __int128 got = static_cast<__int128>(m.to_signed(prod[j])) * 10000;
    const __int128 diff = got > exact ? got - exact : exact - got;
    s.check(diff <= 10000 ? 0 : 1, 0);
  }
}

}  // namespace detail

inline std::vector<std::string> selftest_suites() { return {"sharing", "dcf", "beaver"}; }

inline std::vector<SuiteResult> run_selftest(const SelftestOptions& opt = {}) {
  std::vector<SuiteResult> results;
  for (const auto& name : selftest_suites()) {
    detail::SuiteRun s;
    s.r.name = name;
    s.fault = opt.inject_fault == name;
    Dealer dealer(derive_seed(opt.seed, "selftest/" + name));
    Rng rng(derive_seed(opt.seed, "selftest-inputs/" + name));
    const auto start = std::chrono::steady_clock::now();
    if (name == "sharing") detail::suite_sharing(s, dealer, rng);
    if (name == "dcf") detail::suite_dcf(s, dealer);
    if (name == "beaver") detail::suite_beaver(s, dealer, rng);
    s.r.ms = detail::elapsed_ms(start);
    results.push_back(s.r);
  }
  return results;
}

inline int cmd_selftest(const SelftestOptions& opt, std::ostream& out) {
  const auto suites = selftest_suites();
  if (!opt.inject_fault.empty() && std::find(suites.begin(), suites.end(), opt.inject_fault) == suites.end()) {
    throw InvalidArgument("unknown selftest suite '" + opt.inject_fault + "'");
  }
  bool ok = true;
  for (const auto& r : run_selftest(opt)) {
    out << (r.passed() ? "PASS " : "FAIL ") << std::left << std::setw(8) << r.name << " checks=" << r.checks
        << " failures=" << r.failures << " time_ms=" << detail::fixed(r.ms, 1) << "\n";
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitFailure;
}

// ---- chain ----

// Model files are resolved against the chain file's directory.
inline int cmd_chain(const std::string& action, const std::string& path, std::ostream& out, std::ostream& err) {
  if (action != "dump" && action != "verify") {
    err << "unknown chain action '" << action << "' (expected dump or verify)\n";
    return kExitFailure;
  }
  if (!std::filesystem::exists(path)) {
    err << "chain file not found: " << path << "\n";
    return kExitFailure;
  }
  Chain chain(0);
  try {
    chain = load_chain(path);
  } catch (const FormatError& e) {
    err << "invalid chain: " << e.what() << "\n";
    return kExitFailure;
  }
  if (action == "dump") {
    out << dump_chain(chain);
    return kExitOk;
  }
  const ChainReport rep = validate_chain(chain);
  if (!rep.ok) {
    err << "invalid chain: first bad block " << rep.first_bad.value_or(0) << " (" << rep.reason << ")\n";
    return kExitFailure;
  }
  const auto base = std::filesystem::path(path).parent_path();
  for (const auto& b : chain.blocks()) {
    if (b.index == 0) continue;
    const auto file = base / b.payload.model_ref;
    if (!std::filesystem::exists(file)) {
      err << "invalid chain: block " << b.index << " model file missing (" << file.string() << ")\n";
      return kExitFailure;
    }
    if (!verify_global(detail::read_file(file), chain, b.payload.round)) {
      err << "invalid chain: block " << b.index << " model digest mismatch (" << file.string() << ")\n";
      return kExitFailure;
    }
  }
  out << "ok, " << chain.size() << " blocks\n";
  return kExitOk;
}

// ---- bench ----

struct BenchOptions {
  std::vector<uint32_t> nodes{5, 10, 15, 20};
  uint32_t runs = 5;
  uint32_t history = 25;  // blocks already on every replica
};

struct BenchRow {
  uint32_t nodes = 0;
  double deploy_ms = 0;  // median over runs
  double verify_ms = 0;
};

// Deploy: mine the block, then every node appends it to its replica and
// validates. Verify: every node digests the model, the votes go through
// consensus, every replica is validated.
inline std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, const BenchOptions& opt) {
  for (uint32_t n : opt.nodes) {
    if (n < 2) throw InvalidArgument("bench node counts must be >= 2");
  }
  if (opt.runs == 0) throw InvalidArgument("bench needs at least one run");
  const Model model = initial_model(cfg, {cfg.data.dims}, cfg.data.classes);
  const std::vector<uint8_t> bytes = serialize(model);
  Chain base(cfg.ledger.difficulty);
  for (uint32_t r = 1; r <= opt.history; ++r) {
    base.append(mine_block({r, sha256(std::to_string(r)), "models/round-" + std::to_string(r) + ".bcfm"}, base));
  }
  const uint32_t round = opt.history + 1;
  const BlockPayload payload{round, sha256(bytes), "models/round-" + std::to_string(round) + ".bcfm"};

  std::vector<BenchRow> rows;
  for (uint32_t n : opt.nodes) {
    std::vector<double> deploy, verify;
    for (uint32_t run = 0; run < opt.runs; ++run) {
      std::vector<Chain> replicas(n, base);
      auto start = std::chrono::steady_clock::now();
      const Block b = mine_block(payload, replicas[0]);
      bool ok = true;
      for (auto& rep : replicas) {
        rep.append(b);
        ok = ok && validate_chain(rep).ok;
      }
      deploy.push_back(detail::elapsed_ms(start));

      start = std::chrono::steady_clock::now();
      std::vector<NodeVote> votes;
      for (uint32_t i = 0; i < n; ++i) votes.push_back({i, round, sha256(bytes)});
      ok = ok && consensus_commit(votes, n).committed;
      for (const auto& rep : replicas) ok = ok && validate_chain(rep).ok && verify_global(bytes, rep, round);
      verify.push_back(detail::elapsed_ms(start));
      if (!ok) throw ProtocolError("bench replica failed validation");
    }
    rows.push_back({n, detail::median(deploy), detail::median(verify)});
  }
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "nodes,deploy_ms,verify_ms\n";
  for (const auto& r : rows) out << r.nodes << "," << detail::fixed(r.deploy_ms, 4) << "," << detail::fixed(r.verify_ms, 4) << "\n";
}

inline int cmd_bench(const std::string& config_path, const BenchOptions& opt, std::ostream& out, std::ostream& err,
                     bool use_env = true) {
  ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path, use_env);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  write_bench_csv(run_bench(cfg, opt), out);
  return kExitOk;
}

}  // namespace bcfl
