#pragma once

// Modular rings and fixed-point encoding.
//
// Two ring families are used by the protocols: a large prime field for
// n-party aggregation and power-of-two rings for two-party inference and
// the comparison function. Reals enter either ring as trunc(v * scale) with
// negative values stored in the upper half.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bcfl/errors.hpp"

namespace bcfl {

using u128 = unsigned __int128;

namespace detail {

inline uint64_t mulmod(uint64_t a, uint64_t b, uint64_t m) {
  return static_cast<uint64_t>(static_cast<u128>(a) * b % m);
}

inline uint64_t powmod(uint64_t base, uint64_t exp, uint64_t m) {
  uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

}  // namespace detail

// Deterministic Miller-Rabin; the base set is exact for all 64-bit inputs.
inline bool is_prime_u64(uint64_t n) {
  if (n < 2) return false;
  for (uint64_t p : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                     29ULL, 31ULL, 37ULL}) {
    if (n % p == 0) return n == p;
  }
  uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (uint64_t a : {2ULL, 3ULL, 5ULL, 7ULL, 11ULL, 13ULL, 17ULL, 19ULL, 23ULL,
                     29ULL, 31ULL, 37ULL}) {
    uint64_t x = detail::powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < r; ++i) {
      x = detail::mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

enum class ModulusKind : uint8_t { prime = 0, power_of_two = 1 };

class Modulus {
 public:
  static constexpr uint64_t kMersenne61 = (1ULL << 61) - 1;

  // Aggregation modulus. Must be prime and above 2^60.
  static Modulus prime(uint64_t q) {
    if (q <= (1ULL << 60)) {
      throw InvalidArgument("prime modulus must exceed 2^60");
    }
    if (!is_prime_u64(q)) throw InvalidArgument("modulus is not prime");
    return Modulus(ModulusKind::prime, q, 0);
  }

  // Miniature prime rings (Q = 11 and friends) for exhaustive protocol
  // checks. Not for real data: no headroom guarantee.
  static Modulus toy_prime(uint64_t q) {
    if (!is_prime_u64(q)) throw InvalidArgument("modulus is not prime");
    return Modulus(ModulusKind::prime, q, 0);
  }

  static Modulus power_of_two(unsigned bits) {
    if (bits != 8 && bits != 12 && bits != 16 && bits != 32 && bits != 64) {
      throw InvalidArgument("power-of-two modulus width must be 8, 12, 16, 32 or 64");
    }
    return Modulus(ModulusKind::power_of_two, 0, bits);
  }

  // Any width in [1, 64]; used internally by the comparison function whose
  // domain is one bit narrower than the public ring.
  static Modulus power_of_two_any(unsigned bits) {
    if (bits == 0 || bits > 64) throw InvalidArgument("bit width out of range");
    return Modulus(ModulusKind::power_of_two, 0, bits);
  }

  static Modulus mersenne61() { return Modulus(ModulusKind::prime, kMersenne61, 0); }

  ModulusKind kind() const { return kind_; }
  bool is_prime() const { return kind_ == ModulusKind::prime; }
  unsigned bits() const { return bits_; }

  // Prime: q. Power of two: 2^bits, except 2^64 which is reported as 0.
  uint64_t value() const { return kind_ == ModulusKind::prime ? q_ : (bits_ == 64 ? 0 : (1ULL << bits_)); }

  uint64_t mask() const { return bits_ == 64 ? ~0ULL : ((1ULL << bits_) - 1); }

  // Threshold at or above which an element decodes as negative.
  uint64_t half() const {
    if (kind_ == ModulusKind::prime) return q_ / 2 + (q_ & 1);
    return 1ULL << (bits_ - 1);
  }

  uint64_t reduce(uint64_t x) const { return kind_ == ModulusKind::prime ? x % q_ : (x & mask()); }

  bool contains(uint64_t x) const { return kind_ == ModulusKind::prime ? x < q_ : (x & ~mask()) == 0; }

  uint64_t add(uint64_t a, uint64_t b) const {
    if (kind_ == ModulusKind::power_of_two) return (a + b) & mask();
    uint64_t s = a + b;
    if (s < a || s >= q_) s -= q_;  // s < a: wrapped past 2^64
    return s;
  }

  uint64_t sub(uint64_t a, uint64_t b) const {
    if (kind_ == ModulusKind::power_of_two) return (a - b) & mask();
    return a >= b ? a - b : a + (q_ - b);
  }

  uint64_t neg(uint64_t a) const { return sub(0, a); }

  uint64_t mul(uint64_t a, uint64_t b) const {
    if (kind_ == ModulusKind::power_of_two) return (a * b) & mask();
    return detail::mulmod(a, b, q_);
  }

  int64_t to_signed(uint64_t x) const {
    if (kind_ == ModulusKind::power_of_two) {
      if (bits_ == 64) return static_cast<int64_t>(x);
      return x >= half() ? static_cast<int64_t>(x) - static_cast<int64_t>(1ULL << bits_)
                         : static_cast<int64_t>(x);
    }
    return x >= half() ? -static_cast<int64_t>(q_ - x) : static_cast<int64_t>(x);
  }

  uint64_t from_signed(int64_t v) const {
    if (v >= 0) return reduce(static_cast<uint64_t>(v));
    uint64_t mag = reduce(static_cast<uint64_t>(-(v + 1)) + 1);
    return neg(mag);
  }

  std::string describe() const {
    return kind_ == ModulusKind::prime ? "prime:" + std::to_string(q_) : "pow2:" + std::to_string(bits_);
  }

  friend bool operator==(const Modulus& a, const Modulus& b) {
    return a.kind_ == b.kind_ && a.q_ == b.q_ && a.bits_ == b.bits_;
  }

 private:
  Modulus(ModulusKind kind, uint64_t q, unsigned bits) : kind_(kind), q_(q), bits_(bits) {
    if (kind == ModulusKind::prime) {
      bits_ = 64 - static_cast<unsigned>(__builtin_clzll(q));
    }
  }

  ModulusKind kind_;
  uint64_t q_;
  unsigned bits_;
};

struct RingElement {
  uint64_t value = 0;
  Modulus modulus = Modulus::mersenne61();

  RingElement() = default;
  RingElement(uint64_t v, Modulus m) : value(m.reduce(v)), modulus(m) {}

  friend bool operator==(const RingElement& a, const RingElement& b) {
    return a.value == b.value && a.modulus == b.modulus;
  }
};

inline void require_same_modulus(const Modulus& a, const Modulus& b) {
  if (!(a == b)) throw ModulusMismatch("modulus mismatch: " + a.describe() + " vs " + b.describe());
}

inline RingElement ring_add(const RingElement& a, const RingElement& b) {
  require_same_modulus(a.modulus, b.modulus);
  return {a.modulus.add(a.value, b.value), a.modulus};
}

inline RingElement ring_sub(const RingElement& a, const RingElement& b) {
  require_same_modulus(a.modulus, b.modulus);
  return {a.modulus.sub(a.value, b.value), a.modulus};
}

inline RingElement ring_mul(const RingElement& a, const RingElement& b) {
  require_same_modulus(a.modulus, b.modulus);
  return {a.modulus.mul(a.value, b.value), a.modulus};
}

struct FixedPointConfig {
  uint64_t scale = 10000;
  Modulus modulus = Modulus::mersenne61();

  // Largest |v| that still encodes with signed headroom.
  double max_magnitude() const {
    return static_cast<double>(modulus.half() - 1) / static_cast<double>(scale);
  }
};

inline FixedPointConfig aggregation_fixed_point() { return {10000, Modulus::mersenne61()}; }
inline FixedPointConfig inference_fixed_point() { return {10000, Modulus::power_of_two(64)}; }

// trunc(v * scale) as a signed integer. Products within a few ulps of
// an integer are snapped to it so decimal inputs such as 0.0003 keep their
// fourth decimal despite binary representation error.
inline int64_t fixed_point_integer(double v, uint64_t scale) {
  if (!std::isfinite(v)) throw OverflowError("cannot encode non-finite value");
  const double p = v * static_cast<double>(scale);
  const double nearest = std::nearbyint(p);
  const double snapped = std::fabs(p - nearest) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(p)) ? nearest : std::trunc(p);
  if (std::fabs(snapped) >= 9.2e18) throw OverflowError("fixed-point value exceeds 64 bits");
  return static_cast<int64_t>(snapped);
}

inline uint64_t encode_fixed_raw(double v, const FixedPointConfig& cfg) {
  const int64_t scaled = fixed_point_integer(v, cfg.scale);
  const uint64_t mag = scaled < 0 ? static_cast<uint64_t>(-(scaled + 1)) + 1 : static_cast<uint64_t>(scaled);
  if (mag >= cfg.modulus.half()) {
    throw OverflowError("value " + std::to_string(v) + " exceeds fixed-point headroom of " + cfg.modulus.describe());
  }
  return cfg.modulus.from_signed(scaled);
}

inline double decode_fixed_raw(uint64_t x, const FixedPointConfig& cfg) {
  return static_cast<double>(cfg.modulus.to_signed(x)) / static_cast<double>(cfg.scale);
}

inline RingElement encode_fixed(double v, const FixedPointConfig& cfg) {
  return {encode_fixed_raw(v, cfg), cfg.modulus};
}

inline double decode_fixed(const RingElement& x, const FixedPointConfig& cfg) {
  require_same_modulus(x.modulus, cfg.modulus);
  return decode_fixed_raw(x.value, cfg);
}

inline std::vector<uint64_t> encode_fixed_vector(std::span<const double> values, const FixedPointConfig& cfg) {
  std::vector<uint64_t> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(encode_fixed_raw(v, cfg));
  return out;
}

inline std::vector<double> decode_fixed_vector(std::span<const uint64_t> values, const FixedPointConfig& cfg) {
  std::vector<double> out;
  out.reserve(values.size());
  for (uint64_t v : values) out.push_back(decode_fixed_raw(v, cfg));
  return out;
}

}  // namespace bcfl
