#include "bcfl/secure_inference.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "bcfl/dataio.hpp"

namespace bcfl {
namespace {

const FssConfig kCfg{};

Model trained_mlp(uint64_t seed, const Dataset& ds) {
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = seed;
  return train_local(make_mlp(ds.sample_size(), 16, ds.class_count, seed), ds, tc);
}

TEST(EncryptModelTest, ReconstructsWithinOneUnit) {
  const Model m = make_cnn(1, 6, 6, 2, 3, 4, 1);
  Dealer dealer(1);
  const Model back = decrypt_model(encrypt_model(m, kCfg, dealer));
  const auto a = flatten_params(m), b = flatten_params(back);
  ASSERT_EQ(a.size(), b.size());
  for (size_t j = 0; j < a.size(); ++j) EXPECT_LE(std::fabs(a[j] - b[j]), 1e-4);
}

TEST(EncryptModelTest, ZeroModelAndFreshMasks) {
  Model m = make_mlp(4, 3, 2, 1);
  m = with_params(m, std::vector<double>(m.param_count(), 0.0));
  Dealer d1(1), d2(2);
  const auto e1 = encrypt_model(m, kCfg, d1), e2 = encrypt_model(m, kCfg, d2);
  for (uint64_t v : reconstruct(e1.layers[0].weight)) EXPECT_EQ(v, 0u);
  EXPECT_NE(e1.layers[0].weight[0].values, e2.layers[0].weight[0].values);
  EXPECT_EQ(reconstruct(e1.layers[2].weight), reconstruct(e2.layers[2].weight));
}

TEST(EncryptModelTest, HeadroomViolation) {
  Model m = make_mlp(2, 2, 2, 1);
  m.layers[0].weight.data[0] = 2e5;
  Dealer dealer(1);
  EXPECT_THROW(encrypt_model(m, kCfg, dealer), OverflowError);
}

TEST(EncryptedInferTest, IdentityLayerPassesInputsThrough) {
  Model m = build_model({3}, {LayerSpec::dense(3, 3)}, 0);
  m = with_params(m, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
  Dataset ds{{3}, {}, {}, 3};
  ds.push_back(std::vector<double>{0.5, -1.25, 3.0}, 0);
  ds.push_back(std::vector<double>{-7.5, 0.0001, 2.2}, 1);
  Dealer dealer(5);
  const auto out = encrypted_infer(encrypt_model(m, kCfg, dealer), encrypt_batch(ds, kCfg, dealer), dealer);
  for (size_t i = 0; i < ds.size(); ++i) {
    for (size_t k = 0; k < 3; ++k) EXPECT_NEAR(out.logits[i * 3 + k], ds.sample(i)[k], 1e-4 + 1e-12);
  }
}

void expect_matches_plaintext(const Model& m, const Dataset& ds, uint64_t seed, double min_agreement) {
  Dealer dealer(seed);
  const auto out = encrypted_infer(encrypt_model(m, kCfg, dealer), encrypt_batch(ds, kCfg, dealer), dealer);
  size_t agree = 0;
  double worst = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    const Tensor plain = forward(m, ds.sample_tensor(i));
    const size_t classes = plain.size();
    agree += argmax(plain.data) == out.predictions[i];
    for (size_t c = 0; c < classes; ++c) worst = std::max(worst, std::fabs(plain.data[c] - out.logits[i * classes + c]));
  }
  EXPECT_GE(static_cast<double>(agree) / ds.size(), min_agreement);
  EXPECT_LE(worst, 1e-2);
}

TEST(EncryptedInferTest, MlpMatchesPlaintextForward) {
  const Dataset ds = gen_synthetic(SyntheticSpec{4, 32, 50, 7, 3.0});
  expect_matches_plaintext(trained_mlp(8, ds), ds, 9, 0.99);
}

TEST(EncryptedInferTest, CnnMatchesPlaintextForward) {
  Rng rng(3);
  Dataset ds{{1, 8, 8}, {}, {}, 3};
  for (int i = 0; i < 40; ++i) {
    std::vector<double> x(64);
    for (auto& v : x) v = uniform_unit(rng);
    ds.push_back(x, static_cast<uint32_t>(i % 3));
  }
  const Model m = build_model({1, 8, 8},
                              {LayerSpec::conv2d(1, 3, 3), LayerSpec::relu(), LayerSpec::avgpool(2),
                               LayerSpec::conv2d(3, 2, 2), LayerSpec::relu(), LayerSpec::flatten(),
                               LayerSpec::dense(8, 3)},
                              4);
  expect_matches_plaintext(m, ds, 10, 0.95);
}

TEST(EncryptedInferTest, PreprocessingIsSingleUseAndShapesAreChecked) {
  const Model m = make_mlp(4, 3, 2, 1);
  Dataset ds{{4}, {}, {}, 2};
  ds.push_back(std::vector<double>{1, 2, 3, 4}, 0);
  Dealer dealer(1);
  const auto em = encrypt_model(m, kCfg, dealer);
  const auto eb = encrypt_batch(ds, kCfg, dealer);
  auto pre = preprocess(em, 1, dealer);
  encrypted_infer(em, eb, pre);
  EXPECT_THROW(encrypted_infer(em, eb, pre), ProtocolError);

  Dataset wrong{{5}, {}, {}, 2};
  wrong.push_back(std::vector<double>{1, 2, 3, 4, 5}, 0);
  EXPECT_THROW(encrypted_infer(em, encrypt_batch(wrong, kCfg, dealer), dealer), ShapeMismatch);
}

TEST(VerifyTest, ZeroThresholdAlwaysAccepts) {
  const Dataset ds = gen_synthetic(SyntheticSpec{4, 8, 10, 1, 3.0});
  Model junk = make_mlp(8, 4, 4, 2);
  junk = with_params(junk, std::vector<double>(junk.param_count(), 0.0));
  Dealer dealer(3);
  VerifyRequest req{"junk", 1, 0.0, VerifierMetric::accuracy, kCfg};
  EXPECT_TRUE(verify_local_model(junk, ds, req, dealer).accepted);
  req.metric = VerifierMetric::worst_class;
  EXPECT_TRUE(verify_local_model(junk, ds, req, dealer).accepted);
}

TEST(VerifyTest, EncryptedAccuracyTracksPlaintextOverSeededModels) {
  const Dataset train = gen_synthetic(SyntheticSpec{4, 32, 60, 21, 2.5});
  const Dataset test = gen_synthetic(SyntheticSpec{4, 32, 25, 21, 2.5});
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Model m = trained_mlp(100 + seed, train);
    Dealer dealer(seed);
    const Verdict v = verify_local_model(m, test, {"m", 0, 0.5, VerifierMetric::accuracy, kCfg}, dealer);
    EXPECT_NEAR(v.encrypted_accuracy, evaluate(m, test), 0.02) << "seed " << seed;
    EXPECT_EQ(v.accepted, v.encrypted_accuracy >= 0.5);
  }
}

TEST(VerifyTest, FlippedSourceClassIsRejectedByWorstClassMetric) {
  const Dataset train = gen_synthetic(SyntheticSpec{4, 32, 80, 31, 3.0});
  const Dataset test = gen_synthetic(SyntheticSpec{4, 32, 25, 31, 3.0});
  Dataset flipped = train;
  for (auto& l : flipped.labels) l = l == 0 ? 1 : l;
  const Model benign = trained_mlp(1, train), bad = trained_mlp(1, flipped);
  const auto per_class = per_class_accuracy(predict(benign, test), test.labels, 4);
  const double prev = *std::ranges::min_element(per_class);
  const double tau = relative_threshold(prev, 4);
  Dealer d1(1), d2(2);
  EXPECT_TRUE(verify_local_model(benign, test, {"b", 1, tau, VerifierMetric::worst_class, kCfg}, d1).accepted);
  const Verdict v = verify_local_model(bad, test, {"p", 1, tau, VerifierMetric::worst_class, kCfg}, d2);
  EXPECT_FALSE(v.accepted);
  EXPECT_LT(v.worst_class_accuracy, 0.2);
}

TEST(VerifyTest, VerifierOnlyOpensMaskedValuesAndLogits) {
  const Dataset test = gen_synthetic(SyntheticSpec{4, 8, 10, 2, 3.0});
  const Model m = make_mlp(8, 6, 4, 3);
  Dealer dealer(4);
  const EncryptedModel em = encrypt_model(m, kCfg, dealer);
  const auto encoded_w = encode_fixed_vector(m.layers[0].weight.data, inference_fixed_point(kCfg));
  size_t output_values = 0;
  bool leaked = false;
  {
    ScopedOpenObserver watch([&](OpenKind kind, std::span<const uint64_t> values) {
      if (kind == OpenKind::output) output_values += values.size();
      if (values.size() == encoded_w.size() && std::equal(values.begin(), values.end(), encoded_w.begin())) leaked = true;
    });
    verify_encrypted(em, test, {"m", 0, 0.0, VerifierMetric::accuracy, kCfg}, dealer);
  }
  EXPECT_FALSE(leaked);
  EXPECT_EQ(output_values, test.size() * 4);
}

TEST(VerifyTest, DeterministicPerSeed) {
  const Dataset test = gen_synthetic(SyntheticSpec{4, 8, 10, 2, 3.0});
  const Model m = make_mlp(8, 6, 4, 3);
  Dealer a(7), b(7);
  auto va = verify_local_model(m, test, {"m", 2, 0.3, VerifierMetric::accuracy, kCfg}, a).to_json();
  auto vb = verify_local_model(m, test, {"m", 2, 0.3, VerifierMetric::accuracy, kCfg}, b).to_json();
  va.erase("wall_time_ms");
  vb.erase("wall_time_ms");
  EXPECT_EQ(va, vb);
}

TEST(VerifyTest, ErrorsAndJson) {
  const Model m = make_mlp(8, 6, 4, 3);
  Dealer dealer(1);
  EXPECT_THROW(verify_local_model(m, Dataset{{8}, {}, {}, 4}, {}, dealer), InvalidArgument);
  const Dataset test = gen_synthetic(SyntheticSpec{4, 8, 2, 2, 3.0});
  EXPECT_THROW(verify_local_model(m, test, {"m", 0, 1.5, VerifierMetric::accuracy, kCfg}, dealer), InvalidArgument);
  const auto j = verify_local_model(m, test, {"m", 3, 0.0, VerifierMetric::accuracy, kCfg}, dealer).to_json();
  for (const char* key : {"model_id", "round", "encrypted_accuracy", "threshold", "accepted", "wall_time_ms"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(ThresholdTest, RelativeRule) {
  EXPECT_DOUBLE_EQ(relative_threshold(0.9, 4), 0.45);
  EXPECT_DOUBLE_EQ(relative_threshold(0.5, 4), 0.35);
  EXPECT_DOUBLE_EQ(relative_threshold(0.0, 10), 0.2);
  EXPECT_EQ(parse_metric("accuracy"), VerifierMetric::accuracy);
  EXPECT_THROW(parse_metric("f1"), InvalidArgument);
}

}  // namespace
}  // namespace bcfl
