#pragma once

// Additive secret sharing over a Modulus, the n-party sum protocol, and
// two-party Beaver multiplication with dealer-provided triples.

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bcfl/errors.hpp"
#include "bcfl/random.hpp"
#include "bcfl/ring.hpp"

namespace bcfl {

// Anything that can hand out uniform ring elements: the Dealer, a client's
// own coin stream, or a scripted source in tests.
template <typename S>
concept CoinSource = requires(S& s, const Modulus& m) {
  { s.uniform(m) } -> std::convertible_to<uint64_t>;
};

struct ShareVector {
  size_t party_id = 0;
  size_t party_count = 0;
  Modulus modulus = Modulus::mersenne61();
  std::vector<uint64_t> values;

  size_t size() const { return values.size(); }
};

using PairShares = std::array<ShareVector, 2>;

// First n-1 shares uniform in [0, Q-1]; the closing share is
// (s - sum) mod Q.
template <CoinSource Source>
std::vector<ShareVector> split(std::span<const uint64_t> secret, size_t n, const Modulus& modulus, Source& coins) {
  if (n < 2) throw InvalidArgument("secret sharing needs at least 2 parties");
  std::vector<ShareVector> shares(n);
  for (size_t p = 0; p < n; ++p) {
    shares[p].party_id = p;
    shares[p].party_count = n;
    shares[p].modulus = modulus;
    shares[p].values.resize(secret.size());
  }
  for (size_t j = 0; j < secret.size(); ++j) {
    if (!modulus.contains(secret[j])) throw InvalidArgument("secret element outside the ring");
    uint64_t running = 0;
    for (size_t p = 0; p + 1 < n; ++p) {
      const uint64_t s = modulus.reduce(static_cast<uint64_t>(coins.uniform(modulus)));
      shares[p].values[j] = s;
      running = modulus.add(running, s);
    }
    shares[n - 1].values[j] = modulus.sub(secret[j], running);
  }
  return shares;
}

template <CoinSource Source>
std::vector<ShareVector> split(std::span<const RingElement> secret, size_t n, Source& coins) {
  if (secret.empty()) throw InvalidArgument("cannot infer modulus of an empty secret");
  std::vector<uint64_t> raw;
  raw.reserve(secret.size());
  for (const auto& e : secret) {
    require_same_modulus(e.modulus, secret.front().modulus);
    raw.push_back(e.value);
  }
  return split(std::span<const uint64_t>(raw), n, secret.front().modulus, coins);
}

template <CoinSource Source>
PairShares split_pair(std::span<const uint64_t> secret, const Modulus& modulus, Source& coins) {
  auto v = split(secret, 2, modulus, coins);
  return {std::move(v[0]), std::move(v[1])};
}

inline void check_compatible(const ShareVector& a, const ShareVector& b) {
  require_same_modulus(a.modulus, b.modulus);
  if (a.values.size() != b.values.size()) throw ShapeMismatch("share vectors differ in length");
}

// Requires exactly one share from every declared party.
inline std::vector<uint64_t> reconstruct(std::span<const ShareVector> shares) {
  if (shares.empty()) throw ProtocolError("no shares to reconstruct");
  const size_t n = shares.front().party_count;
  if (n < 2) throw InvalidArgument("reconstruction needs at least 2 parties");
  std::vector<bool> seen(n, false);
  for (const auto& s : shares) {
    check_compatible(s, shares.front());
    if (s.party_count != n || s.party_id >= n) throw ProtocolError("share from unknown party");
    if (seen[s.party_id]) throw ProtocolError("duplicate share for party " + std::to_string(s.party_id));
    seen[s.party_id] = true;
  }
  if (shares.size() != n) {
    throw ProtocolError("missing shares: have " + std::to_string(shares.size()) + " of " + std::to_string(n));
  }
  const Modulus& m = shares.front().modulus;
  std::vector<uint64_t> out(shares.front().size(), 0);
  for (const auto& s : shares) {
    for (size_t j = 0; j < out.size(); ++j) out[j] = m.add(out[j], s.values[j]);
  }
  return out;
}

inline std::vector<uint64_t> reconstruct(const PairShares& shares) {
  return reconstruct(std::span<const ShareVector>(shares.data(), shares.size()));
}

// One party adds up every share it holds (m_p = sum of its shares mod Q).
inline ShareVector local_sum(std::span<const ShareVector> own_shares) {
  if (own_shares.empty()) throw InvalidArgument("local_sum of nothing");
  ShareVector out = own_shares.front();
  for (size_t k = 1; k < own_shares.size(); ++k) {
    const auto& s = own_shares[k];
    check_compatible(s, out);
    if (s.party_id != out.party_id || s.party_count != out.party_count) {
      throw ProtocolError("local_sum over shares held by different parties");
    }
    for (size_t j = 0; j < out.size(); ++j) out.values[j] = out.modulus.add(out.values[j], s.values[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Openings. Every value revealed during a two-party protocol goes through
// open_pair so tests can audit what the parties learn.

enum class OpenKind { beaver_mask, comparison_mask, output };

using OpenObserver = std::function<void(OpenKind, std::span<const uint64_t>)>;

inline OpenObserver*& open_observer_slot() {
  thread_local OpenObserver* slot = nullptr;
  return slot;
}

class ScopedOpenObserver {
 public:
  explicit ScopedOpenObserver(OpenObserver observer) : observer_(std::move(observer)), previous_(open_observer_slot()) {
    open_observer_slot() = &observer_;
  }
  ~ScopedOpenObserver() { open_observer_slot() = previous_; }
  ScopedOpenObserver(const ScopedOpenObserver&) = delete;
  ScopedOpenObserver& operator=(const ScopedOpenObserver&) = delete;

 private:
  OpenObserver observer_;
  OpenObserver* previous_;
};

inline std::vector<uint64_t> open_pair(const PairShares& shares, OpenKind kind) {
  auto revealed = reconstruct(shares);
  if (auto* obs = open_observer_slot()) (*obs)(kind, revealed);
  return revealed;
}

// ---------------------------------------------------------------------------
// Local linear operations on a party's share.

inline ShareVector add_shares(const ShareVector& a, const ShareVector& b) {
  check_compatible(a, b);
  ShareVector out = a;
  for (size_t j = 0; j < out.size(); ++j) out.values[j] = a.modulus.add(a.values[j], b.values[j]);
  return out;
}

inline ShareVector sub_shares(const ShareVector& a, const ShareVector& b) {
  check_compatible(a, b);
  ShareVector out = a;
  for (size_t j = 0; j < out.size(); ++j) out.values[j] = a.modulus.sub(a.values[j], b.values[j]);
  return out;
}

inline PairShares add_pair(const PairShares& a, const PairShares& b) {
  return {add_shares(a[0], b[0]), add_shares(a[1], b[1])};
}

inline PairShares sub_pair(const PairShares& a, const PairShares& b) {
  return {sub_shares(a[0], b[0]), sub_shares(a[1], b[1])};
}

inline PairShares scale_pair(const PairShares& a, uint64_t k) {
  PairShares out = a;
  for (auto& s : out) {
    for (auto& v : s.values) v = s.modulus.mul(v, k);
  }
  return out;
}

// Adds a public vector: only party 0 folds it in.
inline PairShares add_public(const PairShares& a, std::span<const uint64_t> pub) {
  if (pub.size() != a[0].size()) throw ShapeMismatch("public operand length mismatch");
  PairShares out = a;
  for (size_t j = 0; j < pub.size(); ++j) out[0].values[j] = out[0].modulus.add(out[0].values[j], pub[j]);
  return out;
}

// ---------------------------------------------------------------------------
// Beaver multiplication.

struct BeaverTriple {
  PairShares a, b, c;
  bool consumed = false;

  size_t size() const { return a[0].size(); }
};

template <CoinSource Source>
PairShares share_zeros_like(size_t count, const Modulus& m, Source& coins) {
  std::vector<uint64_t> zeros(count, 0);
  return split_pair(zeros, m, coins);
}

inline BeaverTriple make_beaver_triple(size_t count, const Modulus& m, Dealer& dealer) {
  std::vector<uint64_t> a(count), b(count), c(count);
  for (size_t j = 0; j < count; ++j) {
    a[j] = dealer.uniform(m);
    b[j] = dealer.uniform(m);
    c[j] = m.mul(a[j], b[j]);
  }
  return {split_pair(a, m, dealer), split_pair(b, m, dealer), split_pair(c, m, dealer), false};
}

inline void check_pair(const PairShares& p) {
  check_compatible(p[0], p[1]);
  if (p[0].party_id != 0 || p[1].party_id != 1) throw ProtocolError("pair shares out of party order");
}

// Elementwise product of two shared vectors. Consumes the triple.
inline PairShares beaver_mul(const PairShares& x, const PairShares& y, BeaverTriple& triple) {
  if (triple.consumed) throw ProtocolError("Beaver triple already consumed");
  check_pair(x);
  check_pair(y);
  check_compatible(x[0], y[0]);
  check_compatible(x[0], triple.a[0]);
  triple.consumed = true;
  const Modulus& m = x[0].modulus;
  const auto e = open_pair(sub_pair(x, triple.a), OpenKind::beaver_mask);
  const auto f = open_pair(sub_pair(y, triple.b), OpenKind::beaver_mask);
  PairShares z = triple.c;
  for (size_t p = 0; p < 2; ++p) {
    for (size_t j = 0; j < e.size(); ++j) {
      uint64_t v = z[p].values[j];
      v = m.add(v, m.mul(e[j], triple.b[p].values[j]));
      v = m.add(v, m.mul(f[j], triple.a[p].values[j]));
      if (p == 0) v = m.add(v, m.mul(e[j], f[j]));
      z[p].values[j] = v;
    }
  }
  return z;
}

// Matrix Beaver triple for W (rows x inner) times X (inner x cols), all
// row-major. One triple covers a whole linear layer over a batch.
struct MatrixTriple {
  size_t rows = 0, inner = 0, cols = 0;
  PairShares a, b, c;
  bool consumed = false;
};

namespace detail {

inline std::vector<uint64_t> matmul_ring(std::span<const uint64_t> lhs, std::span<const uint64_t> rhs, size_t rows,
                                         size_t inner, size_t cols, const Modulus& m) {
  std::vector<uint64_t> out(rows * cols, 0);
  if (m.kind() == ModulusKind::power_of_two) {
    // Native wraparound is the ring operation; mask once at the end.
    for (size_t r = 0; r < rows; ++r) {
      uint64_t* orow = out.data() + r * cols;
      for (size_t k = 0; k < inner; ++k) {
        const uint64_t w = lhs[r * inner + k];
        const uint64_t* xrow = rhs.data() + k * cols;
        for (size_t c = 0; c < cols; ++c) orow[c] += w * xrow[c];
      }
    }
    for (auto& v : out) v &= m.mask();
    return out;
  }
  for (size_t r = 0; r < rows; ++r) {
    for (size_t k = 0; k < inner; ++k) {
      const uint64_t w = lhs[r * inner + k];
      for (size_t c = 0; c < cols; ++c) out[r * cols + c] = m.add(out[r * cols + c], m.mul(w, rhs[k * cols + c]));
    }
  }
  return out;
}

}  // namespace detail

inline MatrixTriple make_matrix_triple(size_t rows, size_t inner, size_t cols, const Modulus& m, Dealer& dealer) {
  std::vector<uint64_t> a(rows * inner), b(inner * cols);
  for (auto& v : a) v = dealer.uniform(m);
  for (auto& v : b) v = dealer.uniform(m);
  auto c = detail::matmul_ring(a, b, rows, inner, cols, m);
  return {rows, inner, cols, split_pair(a, m, dealer), split_pair(b, m, dealer), split_pair(c, m, dealer), false};
}

inline PairShares beaver_matmul(const PairShares& w, const PairShares& x, MatrixTriple& triple) {
  if (triple.consumed) throw ProtocolError("matrix triple already consumed");
  check_pair(w);
  check_pair(x);
  if (w[0].size() != triple.rows * triple.inner || x[0].size() != triple.inner * triple.cols) {
    throw ShapeMismatch("matrix triple shape does not match operands");
  }
  require_same_modulus(w[0].modulus, triple.a[0].modulus);
  triple.consumed = true;
  const Modulus& m = w[0].modulus;
  const auto e = open_pair(sub_pair(w, triple.a), OpenKind::beaver_mask);
  const auto f = open_pair(sub_pair(x, triple.b), OpenKind::beaver_mask);
  PairShares z = triple.c;
  for (size_t p = 0; p < 2; ++p) {
    const auto eb = detail::matmul_ring(e, triple.b[p].values, triple.rows, triple.inner, triple.cols, m);
    const auto af = detail::matmul_ring(triple.a[p].values, f, triple.rows, triple.inner, triple.cols, m);
    for (size_t j = 0; j < eb.size(); ++j) z[p].values[j] = m.add(z[p].values[j], m.add(eb[j], af[j]));
    if (p == 0) {
      const auto ef = detail::matmul_ring(e, f, triple.rows, triple.inner, triple.cols, m);
      for (size_t j = 0; j < ef.size(); ++j) z[0].values[j] = m.add(z[0].values[j], ef[j]);
    }
  }
  return z;
}

// Local fixed-point truncation in a power-of-two ring: party 0 divides its
// share, party 1 divides the negation of its share and negates back. The
// result is within one unit of floor(x / scale) except with probability
// about |x| / 2^bits.
inline PairShares truncate_shares(const PairShares& x, const FixedPointConfig& cfg) {
  check_pair(x);
  const Modulus& m = x[0].modulus;
  require_same_modulus(m, cfg.modulus);
  if (m.kind() != ModulusKind::power_of_two) throw InvalidArgument("local truncation needs a power-of-two ring");
  if (cfg.scale == 0 || cfg.scale >= m.half()) throw OverflowError("scale leaves no truncation headroom");
  PairShares out = x;
  for (size_t j = 0; j < x[0].size(); ++j) {
    out[0].values[j] = m.reduce(x[0].values[j] / cfg.scale);
    out[1].values[j] = m.neg(m.reduce(m.neg(x[1].values[j]) / cfg.scale));
  }
  return out;
}

}  // namespace bcfl
