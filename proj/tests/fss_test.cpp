#include "bcfl/fss.hpp"

#include <gtest/gtest.h>

namespace bcfl {
namespace {

uint64_t eval_sum(const FssKeyPair& keys, uint64_t x, const Modulus& out) {
  return out.add(dcf_eval(0, keys.k0, x).value, dcf_eval(1, keys.k1, x).value);
}

TEST(DcfTest, WorkedExampleAtEightBits) {
  Dealer dealer(1);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  const auto keys = dcf_gen(5, cfg, dealer);
  EXPECT_EQ(eval_sum(keys, 3, cfg.output), 1u);
  EXPECT_EQ(eval_sum(keys, 5, cfg.output), 0u);
  EXPECT_EQ(eval_sum(keys, 200, cfg.output), 0u);
}

TEST(DcfTest, ExhaustiveEightBits) {
  Dealer dealer(2);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  for (uint64_t alpha = 0; alpha < 256; ++alpha) {
    const auto keys = dcf_gen(alpha, cfg, dealer);
    for (uint64_t x = 0; x < 256; ++x) {
      ASSERT_EQ(eval_sum(keys, x, cfg.output), x < alpha ? 1u : 0u) << "alpha=" << alpha << " x=" << x;
    }
  }
}

TEST(DcfTest, BoundaryAlphas) {
  Dealer dealer(3);
  const FssConfig cfg{8, Modulus::power_of_two(64)};
  const auto zero = dcf_gen(0, cfg, dealer);
  const auto top = dcf_gen(255, cfg, dealer);
  for (uint64_t x = 0; x < 256; ++x) {
    EXPECT_EQ(eval_sum(zero, x, cfg.output), 0u);
    EXPECT_EQ(eval_sum(top, x, cfg.output), x < 255 ? 1u : 0u);
  }
}

TEST(DcfTest, TwelveBitSpotCheckAndPayload) {
  Dealer dealer(4);
  Rng rng(5);
  const FssConfig cfg{12, Modulus::power_of_two(64)};
  for (int i = 0; i < 1000; ++i) {
    const uint64_t alpha = uniform_index(rng, 4096), x = uniform_index(rng, 4096);
    const uint64_t beta = rng();
    const auto keys = dcf_gen(alpha, cfg, dealer, beta);
    ASSERT_EQ(eval_sum(keys, x, cfg.output), x < alpha ? beta : 0u);
  }
}

TEST(DcfTest, ThirtyTwoBitSpotCheck) {
  Dealer dealer(6);
  Rng rng(7);
  const FssConfig cfg{32, Modulus::power_of_two(32)};
  for (int i = 0; i < 200; ++i) {
    const uint64_t alpha = rng() & 0xFFFFFFFF;
    const uint64_t x = i % 2 ? alpha - (i % 5) : (rng() & 0xFFFFFFFF);
    const auto keys = dcf_gen(alpha, cfg, dealer);
    ASSERT_EQ(eval_sum(keys, x & 0xFFFFFFFF, cfg.output), (x & 0xFFFFFFFF) < alpha ? 1u : 0u);
  }
}

TEST(DcfTest, DeterministicEvaluationAndKeys) {
  const FssConfig cfg{16, Modulus::power_of_two(16)};
  Dealer d1(42), d2(42);
  const auto a = dcf_gen(1234, cfg, d1);
  const auto b = dcf_gen(1234, cfg, d2);
  EXPECT_EQ(a.k0, b.k0);
  EXPECT_EQ(a.k1, b.k1);
  EXPECT_EQ(dcf_eval(0, a.k0, 999).value, dcf_eval(0, a.k0, 999).value);
  // O(n) key size: header + seed + 25 bytes per level + final word.
  EXPECT_EQ(a.k0.size(), 9u + 16u + 16u * 25u + 8u);
}

TEST(DcfTest, Errors) {
  Dealer dealer(8);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  EXPECT_THROW(dcf_gen(256, cfg, dealer), InvalidArgument);
  EXPECT_THROW(dcf_gen(1, FssConfig{10, Modulus::power_of_two(8)}, dealer), InvalidArgument);
  auto keys = dcf_gen(7, cfg, dealer);
  EXPECT_THROW(dcf_eval(0, keys.k0, 256), InvalidArgument);
  EXPECT_THROW(dcf_eval(1, keys.k0, 3), InvalidArgument);
  auto truncated = keys.k0;
  truncated.pop_back();
  EXPECT_THROW(dcf_eval(0, truncated, 3), FormatError);
  auto bad_magic = keys.k0;
  bad_magic[0] = 'X';
  EXPECT_THROW(dcf_eval(0, bad_magic, 3), FormatError);
  auto bad_version = keys.k0;
  bad_version[4] = 9;
  EXPECT_THROW(dcf_eval(0, bad_version, 3), FormatError);
}

PairShares share_signed(const std::vector<int64_t>& ys, const Modulus& m, Dealer& dealer) {
  std::vector<uint64_t> enc;
  for (int64_t y : ys) enc.push_back(m.from_signed(y));
  return split_pair(enc, m, dealer);
}

void check_sign_range(unsigned bits, const Modulus& input_ring, const Modulus& output) {
  Dealer dealer(100 + bits);
  const FssConfig cfg{bits, output};
  const int64_t guard = int64_t{1} << (bits - 2);
  std::vector<int64_t> ys;
  for (int64_t y = -guard + 1; y < guard; ++y) ys.push_back(y);
  const auto bits_out = reconstruct(shared_sign(share_signed(ys, input_ring, dealer), cfg, dealer));
  for (size_t j = 0; j < ys.size(); ++j) {
    ASSERT_EQ(bits_out[j], ys[j] >= 0 ? 1u : 0u) << "y=" << ys[j];
  }
}

TEST(SharedSignTest, ExhaustiveGuardedRangeEightBits) {
  check_sign_range(8, Modulus::power_of_two(8), Modulus::power_of_two(8));
  check_sign_range(8, Modulus::power_of_two(64), Modulus::power_of_two(64));
}

TEST(SharedSignTest, ExhaustiveGuardedRangeTwelveBits) {
  check_sign_range(12, Modulus::power_of_two(12), Modulus::power_of_two(64));
}

TEST(SharedSignTest, WorkedExamples) {
  Dealer dealer(9);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  const auto out = reconstruct(shared_sign(share_signed({3, 0, -3}, cfg.output, dealer), cfg, dealer));
  EXPECT_EQ(out, (std::vector<uint64_t>{1, 1, 0}));
}

TEST(SharedSignTest, InferenceRingSpotCheck) {
  Dealer dealer(10);
  Rng rng(11);
  const FssConfig cfg;  // 32-bit domain, Z_{2^64} outputs
  std::vector<int64_t> ys;
  for (int i = 0; i < 2000; ++i) ys.push_back(static_cast<int64_t>(uniform_index(rng, 1ULL << 31)) - (1LL << 30));
  const auto out = reconstruct(shared_sign(share_signed(ys, Modulus::power_of_two(64), dealer), cfg, dealer));
  for (size_t j = 0; j < ys.size(); ++j) ASSERT_EQ(out[j], ys[j] >= 0 ? 1u : 0u);
}

TEST(SharedSignTest, KeysAreSingleUse) {
  Dealer dealer(12);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  const auto y = share_signed({1, -1}, cfg.output, dealer);
  auto keys = make_sign_keys(2, cfg, dealer);
  shared_sign(y, keys);
  EXPECT_THROW(shared_sign(y, keys), ProtocolError);
  auto wrong = make_sign_keys(3, cfg, dealer);
  EXPECT_THROW(shared_sign(y, wrong), ShapeMismatch);
}

TEST(SharedSignTest, OnlyMaskedValuesAreOpened) {
  Dealer dealer(13);
  const FssConfig cfg{8, Modulus::power_of_two(8)};
  int openings = 0;
  ScopedOpenObserver watch([&](OpenKind kind, std::span<const uint64_t>) {
    EXPECT_EQ(kind, OpenKind::comparison_mask);
    ++openings;
  });
  shared_sign(share_signed({5, -5, 0}, cfg.output, dealer), cfg, dealer);
  EXPECT_EQ(openings, 1);
}

}  // namespace
}  // namespace bcfl
