#pragma once

// Function secret sharing for comparison.
//
// A distributed comparison function (DCF) splits f(x) = beta * 1{x < alpha}
// over an n-bit domain into two keys whose evaluations at any public x sum
// to f(x) in the output ring. The construction is the seed-expansion tree:
// each level carries a seed correction word, a value correction word and
// two control-bit corrections; keys are O(n) blocks.
//
// shared_sign builds on it: the dealer hides a mask alpha, the parties open
// x = y + alpha, and one DCF on the low n-1 bits plus the shared top bit of
// alpha (the wrap correction) yields additive shares of 1{y >= 0}.

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <utility>
#include <vector>

#include "bcfl/crypto.hpp"
#include "bcfl/errors.hpp"
#include "bcfl/random.hpp"
#include "bcfl/ring.hpp"
#include "bcfl/sharing.hpp"

namespace bcfl {

struct FssConfig {
  unsigned bit_width = 32;
  Modulus output = Modulus::power_of_two(64);

  void validate() const {
    if (bit_width != 8 && bit_width != 12 && bit_width != 16 && bit_width != 32) {
      throw InvalidArgument("FSS bit width must be 8, 12, 16 or 32");
    }
    if (output.kind() != ModulusKind::power_of_two) throw InvalidArgument("FSS output group must be Z_{2^m}");
  }

  uint64_t domain_mask() const { return bit_width == 64 ? ~0ULL : (1ULL << bit_width) - 1; }
};

struct DcfLevel {
  Block128 seed_cw;
  uint64_t value_cw = 0;
  bool t_left_cw = false;
  bool t_right_cw = false;
};

// One party's evaluation key in structured form.
struct DcfKey {
  unsigned bits = 0;
  Modulus output = Modulus::power_of_two(64);
  uint8_t party = 0;
  Block128 seed;
  std::vector<DcfLevel> levels;
  uint64_t final_cw = 0;
};

struct FssKeyPair {
  std::vector<uint8_t> k0, k1;
  uint64_t alpha = 0;  // dealer-side only; never shipped with a key
};

namespace detail {

struct Expansion {
  Block128 s_left, s_right;
  bool t_left, t_right;
  uint64_t v_left, v_right;
};

inline Expansion expand(const Block128& seed) {
  std::array<Block128, TreePrg::kBlocks> out;
  TreePrg::expand(seed, out);
  Expansion e;
  e.t_left = out[0].lsb();
  e.t_right = out[1].lsb();
  e.s_left = out[0];
  e.s_right = out[1];
  e.s_left.lo &= ~1ULL;
  e.s_right.lo &= ~1ULL;
  e.v_left = out[2].lo;
  e.v_right = out[3].lo;
  return e;
}

inline std::pair<DcfKey, DcfKey> dcf_gen_keys(uint64_t alpha, unsigned bits, const Modulus& out, uint64_t payload,
                                              Dealer& dealer) {
  if (bits == 0 || bits > 63) throw InvalidArgument("DCF domain width out of range");
  if (alpha >> bits) throw InvalidArgument("alpha outside the DCF domain");
  if (out.kind() != ModulusKind::power_of_two) throw InvalidArgument("DCF output group must be Z_{2^m}");
  const Modulus& m = out;
  const uint64_t beta = m.reduce(payload);
  auto conv = [&](uint64_t v) { return m.reduce(v); };
  auto signed_by = [&](bool negative, uint64_t v) { return negative ? m.neg(v) : v; };

  DcfKey k[2];
  Block128 s[2] = {dealer.next_block(), dealer.next_block()};
  bool t[2] = {false, true};
  for (int b = 0; b < 2; ++b) {
    k[b].bits = bits;
    k[b].output = out;
    k[b].party = static_cast<uint8_t>(b);
    k[b].seed = s[b];
    k[b].levels.reserve(bits);
  }
  uint64_t v_alpha = 0;
  for (unsigned i = 0; i < bits; ++i) {
    const bool a = (alpha >> (bits - 1 - i)) & 1;
    const Expansion e0 = expand(s[0]);
    const Expansion e1 = expand(s[1]);
    const Expansion* e[2] = {&e0, &e1};
    auto keep_s = [&](int b) { return a ? e[b]->s_right : e[b]->s_left; };
    auto lose_s = [&](int b) { return a ? e[b]->s_left : e[b]->s_right; };
    auto keep_v = [&](int b) { return a ? e[b]->v_right : e[b]->v_left; };
    auto lose_v = [&](int b) { return a ? e[b]->v_left : e[b]->v_right; };
    auto keep_t = [&](int b) { return a ? e[b]->t_right : e[b]->t_left; };

    DcfLevel level;
    level.seed_cw = lose_s(0) ^ lose_s(1);
    uint64_t vcw = m.sub(m.sub(conv(lose_v(1)), conv(lose_v(0))), v_alpha);
    if (a) vcw = m.add(vcw, beta);  // losing the left branch means x < alpha there
    vcw = signed_by(t[1], vcw);
    level.value_cw = vcw;
    v_alpha = m.add(m.sub(m.add(v_alpha, conv(keep_v(0))), conv(keep_v(1))), signed_by(t[1], vcw));
    level.t_left_cw = e0.t_left ^ e1.t_left ^ a ^ true;
    level.t_right_cw = e0.t_right ^ e1.t_right ^ a;
    const bool keep_t_cw = a ? level.t_right_cw : level.t_left_cw;

    for (int b = 0; b < 2; ++b) {
      Block128 next = keep_s(b);
      if (t[b]) next ^= level.seed_cw;
      const bool next_t = keep_t(b) ^ (t[b] && keep_t_cw);
      s[b] = next;
      t[b] = next_t;
    }
    k[0].levels.push_back(level);
    k[1].levels.push_back(level);
  }
  const uint64_t final_cw = signed_by(t[1], m.sub(m.sub(conv(s[1].lo), conv(s[0].lo)), v_alpha));
  k[0].final_cw = final_cw;
  k[1].final_cw = final_cw;
  return {std::move(k[0]), std::move(k[1])};
}

}  // namespace detail

inline uint64_t dcf_eval_key(const DcfKey& key, uint64_t x) {
  if (x >> key.bits) throw InvalidArgument("DCF input outside the domain");
  const Modulus& m = key.output;
  const bool negate = key.party == 1;
  Block128 s = key.seed;
  bool t = key.party == 1;
  uint64_t v = 0;
  for (unsigned i = 0; i < key.bits; ++i) {
    const DcfLevel& level = key.levels[i];
    detail::Expansion e = detail::expand(s);
    if (t) {
      e.s_left ^= level.seed_cw;
      e.s_right ^= level.seed_cw;
      e.t_left ^= level.t_left_cw;
      e.t_right ^= level.t_right_cw;
    }
    const bool bit = (x >> (key.bits - 1 - i)) & 1;
    uint64_t step = m.reduce(bit ? e.v_right : e.v_left);
    if (t) step = m.add(step, level.value_cw);
    v = m.add(v, negate ? m.neg(step) : step);
    s = bit ? e.s_right : e.s_left;
    t = bit ? e.t_right : e.t_left;
  }
  uint64_t last = m.reduce(s.lo);
  if (t) last = m.add(last, key.final_cw);
  return m.add(v, negate ? m.neg(last) : last);
}

// ---------------------------------------------------------------------------
// Wire format:
//   "DCF1" | version u16 | domain bits u8 | output bits u8 | party u8 |
//   seed 16B | per level { seed_cw 16B | value_cw u64 | t flags u8 } |
//   final_cw u64
// All integers little-endian.

namespace detail {

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline uint64_t get_u64(std::span<const uint8_t> in, size_t& pos) {
  if (pos + 8 > in.size()) throw FormatError("truncated key");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(in[pos + i]) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace detail

inline constexpr uint16_t kDcfKeyVersion = 1;

inline std::vector<uint8_t> serialize_dcf_key(const DcfKey& key) {
  std::vector<uint8_t> out = {'D', 'C', 'F', '1'};
  out.push_back(static_cast<uint8_t>(kDcfKeyVersion & 0xFF));
  out.push_back(static_cast<uint8_t>(kDcfKeyVersion >> 8));
  out.push_back(static_cast<uint8_t>(key.bits));
  out.push_back(static_cast<uint8_t>(key.output.bits()));
  out.push_back(key.party);
  detail::put_u64(out, key.seed.lo);
  detail::put_u64(out, key.seed.hi);
  for (const auto& level : key.levels) {
    detail::put_u64(out, level.seed_cw.lo);
    detail::put_u64(out, level.seed_cw.hi);
    detail::put_u64(out, level.value_cw);
    out.push_back(static_cast<uint8_t>((level.t_left_cw ? 1 : 0) | (level.t_right_cw ? 2 : 0)));
  }
  detail::put_u64(out, key.final_cw);
  return out;
}

inline DcfKey parse_dcf_key(std::span<const uint8_t> bytes) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), "DCF1", 4) != 0) throw FormatError("not a DCF key");
  const uint16_t version = static_cast<uint16_t>(bytes[4] | bytes[5] << 8);
  if (version != kDcfKeyVersion) throw FormatError("unsupported DCF key version");
  DcfKey key;
  key.bits = bytes[6];
  const unsigned out_bits = bytes[7];
  key.party = bytes[8];
  if (key.bits == 0 || key.bits > 63 || out_bits == 0 || out_bits > 64 || key.party > 1) {
    throw FormatError("DCF key header out of range");
  }
  const size_t expected = 9 + 16 + key.bits * 25 + 8;
  if (bytes.size() != expected) throw FormatError("DCF key length mismatch");
  key.output = Modulus::power_of_two_any(out_bits);
  size_t pos = 9;
  key.seed.lo = detail::get_u64(bytes, pos);
  key.seed.hi = detail::get_u64(bytes, pos);
  key.levels.resize(key.bits);
  for (auto& level : key.levels) {
    level.seed_cw.lo = detail::get_u64(bytes, pos);
    level.seed_cw.hi = detail::get_u64(bytes, pos);
    level.value_cw = detail::get_u64(bytes, pos);
    const uint8_t flags = bytes[pos++];
    if (flags > 3) throw FormatError("bad control-bit flags");
    level.t_left_cw = flags & 1;
    level.t_right_cw = flags & 2;
  }
  key.final_cw = detail::get_u64(bytes, pos);
  return key;
}

// Keys for f(x) = payload * 1{x < alpha}.
inline FssKeyPair dcf_gen(uint64_t alpha, const FssConfig& cfg, Dealer& dealer, uint64_t payload = 1) {
  cfg.validate();
  auto [k0, k1] = detail::dcf_gen_keys(alpha, cfg.bit_width, cfg.output, payload, dealer);
  return {serialize_dcf_key(k0), serialize_dcf_key(k1), alpha};
}

inline RingElement dcf_eval(int party, std::span<const uint8_t> key_bytes, uint64_t x) {
  const DcfKey key = parse_dcf_key(key_bytes);
  if (party != key.party) throw InvalidArgument("key belongs to the other party");
  return {dcf_eval_key(key, x), key.output};
}

// ---------------------------------------------------------------------------
// Shared sign.

// Dealer material for sign extraction of `count` values. Single use.
struct SignKeys {
  FssConfig cfg;
  std::vector<DcfKey> keys[2];
  PairShares alpha;     // shares of alpha over Z_{2^n}
  PairShares alpha_msb; // shares of the top bit of alpha over the output ring
  bool consumed = false;

  size_t size() const { return alpha[0].size(); }
};

inline SignKeys make_sign_keys(size_t count, const FssConfig& cfg, Dealer& dealer) {
  cfg.validate();
  const unsigned n = cfg.bit_width;
  const Modulus domain = Modulus::power_of_two_any(n);
  const uint64_t low_mask = (1ULL << (n - 1)) - 1;
  SignKeys sk;
  sk.cfg = cfg;
  sk.keys[0].reserve(count);
  sk.keys[1].reserve(count);
  std::vector<uint64_t> alphas(count), msbs(count);
  for (size_t j = 0; j < count; ++j) {
    alphas[j] = dealer.uniform(domain);
    msbs[j] = alphas[j] >> (n - 1);
    const uint64_t payload = msbs[j] ? cfg.output.neg(1) : 1;
    auto [k0, k1] = detail::dcf_gen_keys(alphas[j] & low_mask, n - 1, cfg.output, payload, dealer);
    sk.keys[0].push_back(std::move(k0));
    sk.keys[1].push_back(std::move(k1));
  }
  sk.alpha = split_pair(alphas, domain, dealer);
  sk.alpha_msb = split_pair(msbs, cfg.output, dealer);
  return sk;
}

// Shares of 1{y >= 0} for each element of y. y may live in any
// power-of-two ring at least n bits wide; its shares are reduced mod 2^n.
// Precondition: |y| < 2^(n-2) (guard band against the ring boundary; the
// construction itself is exact up to 2^(n-1)). Zero counts as non-negative.
inline PairShares shared_sign(const PairShares& y, SignKeys& keys) {
  if (keys.consumed) throw ProtocolError("sign keys already consumed");
  check_pair(y);
  if (y[0].size() != keys.size()) throw ShapeMismatch("sign keys sized for a different vector");
  const Modulus& ym = y[0].modulus;
  const unsigned n = keys.cfg.bit_width;
  if (ym.kind() != ModulusKind::power_of_two || ym.bits() < n) {
    throw ModulusMismatch("shared_sign input ring narrower than the comparison domain");
  }
  keys.consumed = true;
  const Modulus domain = Modulus::power_of_two_any(n);
  const Modulus& out = keys.cfg.output;

  PairShares reduced = y;
  for (auto& s : reduced) {
    s.modulus = domain;
    for (auto& v : s.values) v = domain.reduce(v);
  }
  const auto x = open_pair(add_pair(reduced, keys.alpha), OpenKind::comparison_mask);

  const uint64_t low_mask = (1ULL << (n - 1)) - 1;
  PairShares bits = keys.alpha_msb;
  for (size_t j = 0; j < x.size(); ++j) {
    const bool x_msb = (x[j] >> (n - 1)) & 1;
    const uint64_t xl = x[j] & low_mask;
    for (int p = 0; p < 2; ++p) {
      const uint64_t d = dcf_eval_key(keys.keys[p][j], xl);
      const uint64_t msb = keys.alpha_msb[p].values[j];
      uint64_t v;
      if (x_msb) {
        v = out.add(msb, d);
      } else {
        v = out.neg(out.add(msb, d));
        if (p == 0) v = out.add(v, 1);
      }
      bits[p].values[j] = v;
    }
  }
  return bits;
}

// One-shot convenience: the dealer prepares fresh keys for this call.
inline PairShares shared_sign(const PairShares& y, const FssConfig& cfg, Dealer& dealer) {
  SignKeys keys = make_sign_keys(y[0].size(), cfg, dealer);
  return shared_sign(y, keys);
}

}  // namespace bcfl
