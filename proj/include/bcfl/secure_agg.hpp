#pragma once

// Additive-share aggregation of verified local models across n nodes.
// Each client splits its fixed-point parameters into one share vector per
// node; each node sums the shares it received; the node sums reconstruct
// to the sum of all models, which is divided by the client count.

#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bcfl/errors.hpp"
#include "bcfl/neuralnet.hpp"
#include "bcfl/random.hpp"
#include "bcfl/ring.hpp"
#include "bcfl/sharing.hpp"

namespace bcfl {

struct VerifiedShare {
  uint32_t client_id = 0;
  uint32_t round = 0;
  std::vector<ShareVector> node_shares;  // index = node id
};

// Largest |parameter| that still leaves room for `max_clients` additions
// without wrapping past Q/2.
inline double aggregation_headroom(size_t max_clients, const FixedPointConfig& fp = aggregation_fixed_point()) {
  return static_cast<double>(fp.modulus.half() / max_clients) / static_cast<double>(fp.scale);
}

inline std::vector<uint64_t> encode_params(const Model& m, size_t max_clients,
                                           const FixedPointConfig& fp = aggregation_fixed_point()) {
  if (max_clients < 1) throw InvalidArgument("max_clients must be positive");
  const double bound = aggregation_headroom(max_clients, fp);
  const auto params = flatten_params(m);
  for (double p : params) {
    if (!(std::fabs(p) < bound)) {
      throw OverflowError("parameter " + std::to_string(p) + " exceeds aggregation headroom for " +
                          std::to_string(max_clients) + " clients");
    }
  }
  return encode_fixed_vector(params, fp);
}

template <CoinSource Source>
VerifiedShare share_model_params(const Model& m, size_t node_count, Source& coins, uint32_t client_id = 0,
                                 uint32_t round = 0, size_t max_clients = 1024) {
  if (node_count < 2) throw InvalidArgument("aggregation needs at least 2 nodes");
  const auto fp = aggregation_fixed_point();
  const auto encoded = encode_params(m, max_clients, fp);
  return {client_id, round, split(std::span<const uint64_t>(encoded), node_count, fp.modulus, coins)};
}

// One node's sum over the shares it holds, one per contributing client.
inline ShareVector node_partial_sum(std::span<const ShareVector> client_shares) {
  if (client_shares.empty()) throw ProtocolError("no client shares for this node");
  return local_sum(client_shares);
}

// Reconstruct, signed-decode, divide by the client count (truncating) and
// rebuild a model with the template's topology.
inline Model finalize_global(std::span<const ShareVector> partials, size_t client_count, const Model& templ) {
  if (client_count < 1) throw InvalidArgument("client count must be positive");
  if (partials.empty()) throw ProtocolError("no partial sums");
  if (partials.size() != partials.front().party_count) {
    throw ProtocolError("node count mismatch: have " + std::to_string(partials.size()) + " partial sums of " +
                        std::to_string(partials.front().party_count));
  }
  const auto fp = aggregation_fixed_point();
  if (partials.front().modulus != fp.modulus) throw ModulusMismatch("partial sums not over the aggregation field");
  const auto sum = reconstruct(partials);
  if (sum.size() != templ.param_count()) throw ShapeMismatch("partial sums do not match the model template");
  std::vector<double> mean(sum.size());
  const auto k = static_cast<int64_t>(client_count);
  for (size_t j = 0; j < sum.size(); ++j) {
    mean[j] = static_cast<double>(fp.modulus.to_signed(sum[j]) / k) / static_cast<double>(fp.scale);
  }
  return with_params(templ, mean);
}

// Per-round bookkeeping: shares arrive from clients in any order; partial
// sums are only released once every expected client has delivered.
class AggregationState {
 public:
  AggregationState(uint32_t round, std::set<uint32_t> expected, size_t node_count)
      : round_(round), expected_(std::move(expected)), node_count_(node_count) {
    if (expected_.empty()) throw InvalidArgument("aggregation round needs at least one client");
    if (node_count_ < 2) throw InvalidArgument("aggregation needs at least 2 nodes");
  }

  void receive(VerifiedShare s) {
    if (s.round != round_) throw ProtocolError("share for round " + std::to_string(s.round) + " in round " +
                                               std::to_string(round_));
    if (!expected_.count(s.client_id)) throw ProtocolError("unexpected client " + std::to_string(s.client_id));
    if (received_.count(s.client_id)) throw ProtocolError("duplicate share from client " + std::to_string(s.client_id));
    if (s.node_shares.size() != node_count_) throw ProtocolError("share count does not match node count");
    if (param_count_ == 0) param_count_ = s.node_shares.front().size();
    for (const auto& v : s.node_shares) {
      if (v.size() != param_count_) throw ShapeMismatch("client parameter length differs");
    }
    received_.emplace(s.client_id, std::move(s));
  }

  bool complete() const { return received_.size() == expected_.size(); }
  uint32_t round() const { return round_; }
  size_t client_count() const { return expected_.size(); }
  size_t node_count() const { return node_count_; }
  size_t param_count() const { return param_count_; }

  std::vector<uint32_t> missing() const {
    std::vector<uint32_t> out;
    for (uint32_t c : expected_) {
      if (!received_.count(c)) out.push_back(c);
    }
    return out;
  }

  // What node `node` would broadcast. Stalls (throws) while clients are missing.
  ShareVector partial_sum(size_t node) const {
    if (!complete()) throw ProtocolError("round stalled: " + std::to_string(missing().size()) + " client share(s) missing");
    if (node >= node_count_) throw InvalidArgument("no such node");
    std::vector<ShareVector> mine;
    for (const auto& [id, s] : received_) mine.push_back(s.node_shares[node]);
    return node_partial_sum(mine);
  }

  std::vector<ShareVector> partial_sums() const {
    std::vector<ShareVector> out;
    for (size_t n = 0; n < node_count_; ++n) out.push_back(partial_sum(n));
    return out;
  }

 private:
  uint32_t round_;
  std::set<uint32_t> expected_;
  size_t node_count_;
  size_t param_count_ = 0;
  std::map<uint32_t, VerifiedShare> received_;
};

// ---------------------------------------------------------------------------
// Wire format for one client's share destined for one node:
//   "BCSM" | version u16 | round u32 | client u32 | node u32 | node count u32 |
//   param count u32 | Q u64 | payload u64 * param count      (little-endian)

struct ShareMessage {
  uint32_t round = 0;
  uint32_t client_id = 0;
  uint32_t node_id = 0;
  uint32_t node_count = 0;
  uint64_t q = 0;
  std::vector<uint64_t> payload;

  friend bool operator==(const ShareMessage&, const ShareMessage&) = default;
};

inline constexpr uint16_t kShareMessageVersion = 1;

inline std::vector<uint8_t> encode_share_message(const ShareMessage& msg) {
  std::vector<uint8_t> out = {'B', 'C', 'S', 'M'};
  auto put = [&](uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  put(kShareMessageVersion, 2);
  put(msg.round, 4);
  put(msg.client_id, 4);
  put(msg.node_id, 4);
  put(msg.node_count, 4);
  put(msg.payload.size(), 4);
  put(msg.q, 8);
  for (uint64_t v : msg.payload) put(v, 8);
  return out;
}

inline ShareMessage decode_share_message(std::span<const uint8_t> bytes) {
  size_t pos = 0;
  auto get = [&](int n) {
    if (pos + n > bytes.size()) throw FormatError("share message truncated");
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += n;
    return v;
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "BCSM", 4) != 0) throw FormatError("not a share message");
  pos = 4;
  if (get(2) != kShareMessageVersion) throw FormatError("unsupported share message version");
  ShareMessage msg;
  msg.round = static_cast<uint32_t>(get(4));
  msg.client_id = static_cast<uint32_t>(get(4));
  msg.node_id = static_cast<uint32_t>(get(4));
  msg.node_count = static_cast<uint32_t>(get(4));
  const size_t count = get(4);
  msg.q = get(8);
  if (bytes.size() - pos != count * 8) throw FormatError("share message payload length mismatch");
  if (msg.node_id >= msg.node_count) throw FormatError("node id out of range");
  msg.payload.resize(count);
  for (auto& v : msg.payload) {
    v = get(8);
    if (msg.q != 0 && v >= msg.q) throw FormatError("share value outside the field");
  }
  return msg;
}

inline std::vector<ShareMessage> to_messages(const VerifiedShare& s) {
  std::vector<ShareMessage> out;
  for (const auto& v : s.node_shares) {
    out.push_back({s.round, s.client_id, static_cast<uint32_t>(v.party_id), static_cast<uint32_t>(v.party_count),
                   v.modulus.value(), v.values});
  }
  return out;
}

inline ShareVector from_message(const ShareMessage& msg) {
  const Modulus m = msg.q == Modulus::mersenne61().value() ? Modulus::mersenne61() : Modulus::prime(msg.q);
  return {msg.node_id, msg.node_count, m, msg.payload};
}

}  // namespace bcfl
