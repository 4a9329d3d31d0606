#pragma once

// Reproducible randomness. std::mt19937_64 is fully specified by the
// standard; the distributions below are spelled out here because the
// standard library's are implementation-defined and would break golden
// files across toolchains.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "bcfl/crypto.hpp"
#include "bcfl/ring.hpp"

namespace bcfl {

using Rng = std::mt19937_64;

inline uint64_t uniform_index(Rng& rng, uint64_t n) {
  const uint64_t threshold = (0 - n) % n;
  for (;;) {
    const uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

// [0, 1) with 53 bits of precision.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_unit(rng); }

// Box-Muller; one sample per call keeps the stream position predictable.
inline double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void shuffle_in_place(std::span<T> items, Rng& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// Independent stream seed for (master, purpose, index). Used so that the
// order in which clients or nodes run never changes what they draw.
inline uint64_t derive_seed(uint64_t master, std::string_view purpose, uint64_t index = 0) {
  std::string material(purpose);
  for (int i = 0; i < 8; ++i) material.push_back(static_cast<char>((master >> (8 * i)) & 0xFF));
  for (int i = 0; i < 8; ++i) material.push_back(static_cast<char>((index >> (8 * i)) & 0xFF));
  const Digest d = sha256(material);
  uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= static_cast<uint64_t>(d[i]) << (8 * i);
  return out;
}

// The trusted dealer's randomness: masks, triples, comparison keys and
// share coins. Deterministic given its seed. Not thread-safe; each
// concurrent task owns its own dealer.
class Dealer {
 public:
  explicit Dealer(uint64_t seed, Modulus modulus = Modulus::mersenne61())
      : seed_(seed), modulus_(modulus), stream_("bcfl/dealer/v1", seed) {}

  uint64_t seed() const { return seed_; }
  const Modulus& modulus() const { return modulus_; }

  uint64_t uniform() { return uniform(modulus_); }

  uint64_t uniform(const Modulus& m) {
    if (m.is_prime()) return stream_.uniform_below(m.value());
    return stream_.next_u64() & m.mask();
  }

  uint64_t next_u64() { return stream_.next_u64(); }
  Block128 next_block() { return stream_.next_block(); }

 private:
  uint64_t seed_;
  Modulus modulus_;
  CtrDrbg stream_;
};

}  // namespace bcfl
