#pragma once

// Thin RAII wrappers over libcrypto: SHA-256 for digests and block hashes,
// AES-128 for the tree PRG inside the comparison function and for the
// dealer's counter-mode stream.

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "bcfl/errors.hpp"

namespace bcfl {

using Digest = std::array<uint8_t, 32>;

inline Digest sha256(std::span<const uint8_t> bytes) {
  Digest out{};
  SHA256(bytes.data(), bytes.size(), out.data());
  return out;
}

inline Digest sha256(std::string_view text) {
  return sha256(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

inline std::string to_hex(std::span<const uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xF]);
  }
  return out;
}

inline std::optional<Digest> digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Digest d{};
  for (size_t i = 0; i < 32; ++i) {
    int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    d[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return d;
}

struct Block128 {
  uint64_t lo = 0;
  uint64_t hi = 0;

  Block128& operator^=(const Block128& o) {
    lo ^= o.lo;
    hi ^= o.hi;
    return *this;
  }
  friend Block128 operator^(Block128 a, const Block128& b) { return a ^= b; }
  friend bool operator==(const Block128&, const Block128&) = default;

  bool lsb() const { return (lo & 1) != 0; }
};

// AES-128 in ECB mode, one key per instance.
class Aes128 {
 public:
  explicit Aes128(const std::array<uint8_t, 16>& key) : ctx_(EVP_CIPHER_CTX_new()) {
    if (!ctx_ || EVP_EncryptInit_ex(ctx_.get(), EVP_aes_128_ecb(), nullptr, key.data(), nullptr) != 1) {
      throw Error("AES-128 initialisation failed");
    }
    EVP_CIPHER_CTX_set_padding(ctx_.get(), 0);
  }

  void encrypt(const Block128* in, Block128* out, size_t count) {
    int len = 0;
    const int bytes = static_cast<int>(count * sizeof(Block128));
    if (EVP_EncryptUpdate(ctx_.get(), reinterpret_cast<uint8_t*>(out), &len,
                          reinterpret_cast<const uint8_t*>(in), bytes) != 1 ||
        len != bytes) {
      throw Error("AES-128 encryption failed");
    }
  }

 private:
  struct CtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
  };
  std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter> ctx_;
};

// Length-doubling-and-more PRG used by the comparison-function key tree.
// Fixed-key AES in Matyas-Meyer-Oseas mode: out[i] = AES_k(s ^ i) ^ (s ^ i).
class TreePrg {
 public:
  static constexpr size_t kBlocks = 4;

  static void expand(const Block128& seed, std::array<Block128, kBlocks>& out) {
    thread_local Aes128 cipher(fixed_key());
    std::array<Block128, kBlocks> in;
    for (size_t i = 0; i < kBlocks; ++i) {
      in[i] = seed;
      in[i].lo ^= i;
    }
    cipher.encrypt(in.data(), out.data(), kBlocks);
    for (size_t i = 0; i < kBlocks; ++i) out[i] ^= in[i];
  }

 private:
  static std::array<uint8_t, 16> fixed_key() {
    const Digest d = sha256(std::string_view("bcfl/dcf-tree-prg/v1"));
    std::array<uint8_t, 16> key{};
    std::memcpy(key.data(), d.data(), key.size());
    return key;
  }
};

// AES-CTR keystream keyed by SHA-256(label || seed). Deterministic per
// (label, seed) on every platform.
class CtrDrbg {
 public:
  CtrDrbg(std::string_view label, uint64_t seed) : cipher_(derive_key(label, seed)) {}

  uint64_t next_u64() {
    if (pos_ == buffer_.size() * 2) refill();
    const Block128& b = buffer_[pos_ / 2];
    return (pos_++ & 1) ? b.hi : b.lo;
  }

  Block128 next_block() { return {next_u64(), next_u64()}; }

  // Uniform in [0, bound) by rejection; bound == 0 means the full 64 bits.
  uint64_t uniform_below(uint64_t bound) {
    if (bound == 0) return next_u64();
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  static std::array<uint8_t, 16> derive_key(std::string_view label, uint64_t seed) {
    std::string material(label);
    for (int i = 0; i < 8; ++i) material.push_back(static_cast<char>((seed >> (8 * i)) & 0xFF));
    const Digest d = sha256(material);
    std::array<uint8_t, 16> key{};
    std::memcpy(key.data(), d.data(), key.size());
    return key;
  }

  void refill() {
    std::array<Block128, 32> counters;
    for (auto& c : counters) c = {counter_++, 0};
    cipher_.encrypt(counters.data(), buffer_.data(), counters.size());
    pos_ = 0;
  }

  Aes128 cipher_;
  std::array<Block128, 32> buffer_{};
  size_t pos_ = 64;
  uint64_t counter_ = 0;
};

}  // namespace bcfl
