#pragma once

// Two-party encrypted inference of a secret-shared model over secret-shared
// inputs, and the accept/reject verdict built on top of it.
//
// Activations are laid out feature-major: a batch of B samples with F
// features is an F x B row-major matrix, so a linear layer is W (out x F)
// times X (F x B) and conv layers go through im2col.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "json.hpp"

#include "bcfl/dataset.hpp"
#include "bcfl/errors.hpp"
#include "bcfl/fss.hpp"
#include "bcfl/neuralnet.hpp"
#include "bcfl/random.hpp"
#include "bcfl/ring.hpp"
#include "bcfl/sharing.hpp"

namespace bcfl {

inline FixedPointConfig inference_fixed_point(const FssConfig& cfg) { return {10000, cfg.output}; }

struct EncryptedLayer {
  LayerSpec spec;
  PairShares weight;  // empty for non-parametric layers
  PairShares bias;
};

// Topology is public; parameter values exist only as shares.
struct EncryptedModel {
  Shape input_shape;
  FssConfig cfg;
  std::vector<EncryptedLayer> layers;
};

struct EncryptedBatch {
  Shape sample_shape;
  size_t count = 0;
  PairShares x;  // feature-major, shape_size(sample_shape) x count
};

namespace detail {

inline PairShares empty_pair(const Modulus& m) {
  PairShares p;
  for (size_t i = 0; i < 2; ++i) p[i] = ShareVector{i, 2, m, {}};
  return p;
}

// Largest magnitude (in ring units) that keeps every activation inside the
// comparison guard band.
inline uint64_t headroom_units(const FssConfig& cfg) { return 1ULL << (cfg.bit_width - 2); }

inline std::vector<uint64_t> encode_checked(std::span<const double> values, const FssConfig& cfg, const char* what) {
  const auto fp = inference_fixed_point(cfg);
  std::vector<uint64_t> out;
  out.reserve(values.size());
  for (double v : values) {
    const int64_t q = fixed_point_integer(v, fp.scale);
    if (static_cast<uint64_t>(q < 0 ? -q : q) >= headroom_units(cfg)) {
      throw OverflowError(std::string(what) + " value " + std::to_string(v) + " exceeds the fixed-point headroom");
    }
    out.push_back(encode_fixed_raw(v, fp));
  }
  return out;
}

}  // namespace detail

inline EncryptedModel encrypt_model(const Model& m, const FssConfig& cfg, Dealer& dealer) {
  cfg.validate();
  validate_model(m);
  EncryptedModel em{m.input_shape, cfg, {}};
  for (const auto& l : m.layers) {
    EncryptedLayer el{l.spec, detail::empty_pair(cfg.output), detail::empty_pair(cfg.output)};
    if (l.spec.parametric()) {
      el.weight = split_pair(detail::encode_checked(l.weight.data, cfg, "parameter"), cfg.output, dealer);
      el.bias = split_pair(detail::encode_checked(l.bias.data, cfg, "parameter"), cfg.output, dealer);
    }
    em.layers.push_back(std::move(el));
  }
  return em;
}

// Row-major samples in, feature-major shares out.
inline EncryptedBatch encrypt_batch(const Dataset& data, const FssConfig& cfg, Dealer& dealer) {
  cfg.validate();
  const size_t f = data.sample_size(), b = data.size();
  std::vector<double> cols(f * b);
  for (size_t i = 0; i < b; ++i) {
    const auto s = data.sample(i);
    for (size_t k = 0; k < f; ++k) cols[k * b + i] = s[k];
  }
  return {data.sample_shape, b, split_pair(detail::encode_checked(cols, cfg, "input"), cfg.output, dealer)};
}

// Reveals the model. Test and debugging use only.
inline Model decrypt_model(const EncryptedModel& em) {
  const auto fp = inference_fixed_point(em.cfg);
  Model m{em.input_shape, {}};
  for (const auto& el : em.layers) {
    Layer l{el.spec, {}, {}};
    if (el.spec.parametric()) {
      const Shape ws = el.spec.kind == LayerKind::dense ? Shape{el.spec.b, el.spec.a}
                                                         : Shape{el.spec.b, el.spec.a, el.spec.c, el.spec.c};
      l.weight = Tensor(ws, decode_fixed_vector(reconstruct(el.weight), fp));
      l.bias = Tensor({el.spec.b}, decode_fixed_vector(reconstruct(el.bias), fp));
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Offline material.

// Dealer output for one pass of a model over a batch of fixed size, queued
// in the order the online phase consumes it.
struct InferencePreprocessing {
  std::deque<MatrixTriple> matrix;
  std::deque<SignKeys> sign;
  std::deque<BeaverTriple> elementwise;

  template <typename T>
  static T take(std::deque<T>& q, const char* what) {
    if (q.empty()) throw ProtocolError(std::string("preprocessing exhausted: no ") + what + " left");
    T v = std::move(q.front());
    q.pop_front();
    return v;
  }
};

inline InferencePreprocessing preprocess(const EncryptedModel& em, size_t batch, Dealer& dealer) {
  if (batch == 0) throw InvalidArgument("empty batch");
  InferencePreprocessing pre;
  Shape cur = em.input_shape;
  for (const auto& el : em.layers) {
    const Shape next = layer_output_shape(el.spec, cur);
    switch (el.spec.kind) {
      case LayerKind::dense:
        pre.matrix.push_back(make_matrix_triple(el.spec.b, el.spec.a, batch, em.cfg.output, dealer));
        break;
      case LayerKind::conv2d:
        pre.matrix.push_back(make_matrix_triple(el.spec.b, size_t{el.spec.a} * el.spec.c * el.spec.c,
                                                next[1] * next[2] * batch, em.cfg.output, dealer));
        break;
      case LayerKind::relu: {
        const size_t n = shape_size(cur) * batch;
        pre.sign.push_back(make_sign_keys(n, em.cfg, dealer));
        pre.elementwise.push_back(make_beaver_triple(n, em.cfg.output, dealer));
        break;
      }
      case LayerKind::avgpool:
      case LayerKind::flatten:
        break;
    }
    cur = next;
  }
  return pre;
}

// ---------------------------------------------------------------------------
// Online phase. Every step below is local except the Beaver openings, the
// masked comparison openings and the final logit opening.

namespace detail {

// (C, H, W) x B  ->  (C*k*k) x (OH*OW*B)
inline std::vector<uint64_t> im2col(const std::vector<uint64_t>& x, size_t c, size_t h, size_t w, size_t k,
                                    size_t batch) {
  const size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<uint64_t> out(c * k * k * oh * ow * batch);
  size_t row = 0;
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t ki = 0; ki < k; ++ki) {
      for (size_t kj = 0; kj < k; ++kj, ++row) {
        uint64_t* dst = out.data() + row * oh * ow * batch;
        for (size_t y = 0; y < oh; ++y) {
          for (size_t xx = 0; xx < ow; ++xx) {
            const uint64_t* src = x.data() + ((ch * h + y + ki) * w + xx + kj) * batch;
            std::copy(src, src + batch, dst + (y * ow + xx) * batch);
          }
        }
      }
    }
  }
  return out;
}

inline PairShares map_pair(const PairShares& in, const auto& fn) {
  PairShares out = in;
  for (size_t p = 0; p < 2; ++p) out[p].values = fn(in[p].values);
  return out;
}

// Adds a per-row public-to-the-party share (bias) to every column.
inline void add_row_shares(PairShares& x, const PairShares& bias, size_t cols_per_row, const Modulus& m) {
  for (size_t p = 0; p < 2; ++p) {
    for (size_t r = 0; r < bias[p].size(); ++r) {
      const uint64_t b = bias[p].values[r];
      uint64_t* row = x[p].values.data() + r * cols_per_row;
      for (size_t j = 0; j < cols_per_row; ++j) row[j] = m.add(row[j], b);
    }
  }
}

inline PairShares avgpool_shares(const PairShares& x, const Shape& in, size_t window, size_t batch,
                                 const FixedPointConfig& fp) {
  const Modulus& m = fp.modulus;
  const size_t c = in[0], h = in[1], w = in[2], oh = h / window, ow = w / window;
  // Window mean = (sum of the window) * round(scale / window^2), then one truncation.
  const uint64_t inv = static_cast<uint64_t>(std::llround(static_cast<double>(fp.scale) / (window * window)));
  PairShares out = x;
  for (size_t p = 0; p < 2; ++p) {
    std::vector<uint64_t> v(c * oh * ow * batch, 0);
    for (size_t ch = 0; ch < c; ++ch) {
      for (size_t y = 0; y < oh; ++y) {
        for (size_t xx = 0; xx < ow; ++xx) {
          uint64_t* dst = v.data() + ((ch * oh + y) * ow + xx) * batch;
          for (size_t dy = 0; dy < window; ++dy) {
            for (size_t dx = 0; dx < window; ++dx) {
              const uint64_t* src = x[p].values.data() + ((ch * h + y * window + dy) * w + xx * window + dx) * batch;
              for (size_t b = 0; b < batch; ++b) dst[b] = m.add(dst[b], src[b]);
            }
          }
          for (size_t b = 0; b < batch; ++b) dst[b] = m.mul(dst[b], inv);
        }
      }
    }
    out[p].values = std::move(v);
  }
  return truncate_shares(out, fp);
}

}  // namespace detail

// Shares of the logits (classes x batch, feature-major), never opened.
inline PairShares encrypted_logits(const EncryptedModel& em, const EncryptedBatch& eb, InferencePreprocessing& pre) {
  if (eb.sample_shape != em.input_shape) {
    throw ShapeMismatch("batch samples " + shape_string(eb.sample_shape) + " do not match model input " +
                        shape_string(em.input_shape));
  }
  check_pair(eb.x);
  if (eb.x[0].size() != shape_size(eb.sample_shape) * eb.count) throw ShapeMismatch("batch share length mismatch");
  require_same_modulus(eb.x[0].modulus, em.cfg.output);
  const auto fp = inference_fixed_point(em.cfg);
  const Modulus& m = em.cfg.output;
  const size_t batch = eb.count;

  PairShares x = eb.x;
  Shape cur = em.input_shape;
  for (const auto& el : em.layers) {
    const Shape next = layer_output_shape(el.spec, cur);
    switch (el.spec.kind) {
      case LayerKind::dense: {
        auto t = InferencePreprocessing::take(pre.matrix, "matrix triples");
        x = truncate_shares(beaver_matmul(el.weight, x, t), fp);
        detail::add_row_shares(x, el.bias, batch, m);
        break;
      }
      case LayerKind::conv2d: {
        auto t = InferencePreprocessing::take(pre.matrix, "matrix triples");
        const auto cols = detail::map_pair(x, [&](const std::vector<uint64_t>& v) {
          return detail::im2col(v, cur[0], cur[1], cur[2], el.spec.c, batch);
        });
        x = truncate_shares(beaver_matmul(el.weight, cols, t), fp);
        detail::add_row_shares(x, el.bias, next[1] * next[2] * batch, m);
        break;
      }
      case LayerKind::relu: {
        auto keys = InferencePreprocessing::take(pre.sign, "comparison keys");
        auto triple = InferencePreprocessing::take(pre.elementwise, "Beaver triples");
        const PairShares bit = shared_sign(x, keys);
        x = beaver_mul(x, bit, triple);  // bit is an integer 0/1, no rescale
        break;
      }
      case LayerKind::avgpool:
        x = detail::avgpool_shares(x, cur, el.spec.a, batch, fp);
        break;
      case LayerKind::flatten:
        break;
    }
    cur = next;
  }
  return x;
}

struct InferenceOutputs {
  std::vector<uint32_t> predictions;
  std::vector<double> logits;  // row-major batch x classes, decoded
};

inline InferenceOutputs encrypted_infer(const EncryptedModel& em, const EncryptedBatch& eb,
                                        InferencePreprocessing& pre) {
  const PairShares z = encrypted_logits(em, eb, pre);
  const auto opened = open_pair(z, OpenKind::output);
  const auto fp = inference_fixed_point(em.cfg);
  const size_t classes = opened.size() / eb.count;
  InferenceOutputs out;
  out.logits.resize(opened.size());
  for (size_t c = 0; c < classes; ++c) {
    for (size_t b = 0; b < eb.count; ++b) out.logits[b * classes + c] = decode_fixed_raw(opened[c * eb.count + b], fp);
  }
  for (size_t b = 0; b < eb.count; ++b) {
    out.predictions.push_back(
        static_cast<uint32_t>(argmax(std::span<const double>(out.logits).subspan(b * classes, classes))));
  }
  return out;
}

inline InferenceOutputs encrypted_infer(const EncryptedModel& em, const EncryptedBatch& eb, Dealer& dealer) {
  auto pre = preprocess(em, eb.count, dealer);
  return encrypted_infer(em, eb, pre);
}

// ---------------------------------------------------------------------------
// Verdicts.

enum class VerifierMetric { worst_class, accuracy };

inline std::string metric_name(VerifierMetric m) { return m == VerifierMetric::accuracy ? "accuracy" : "worst_class"; }

inline VerifierMetric parse_metric(const std::string& s) {
  if (s == "accuracy") return VerifierMetric::accuracy;
  if (s == "worst_class") return VerifierMetric::worst_class;
  throw InvalidArgument("unknown verifier metric: " + s);
}

// Relative threshold: half the previous global model's score, never below
// chance + 0.1.
inline double relative_threshold(double previous_score, uint32_t classes, double factor = 0.5, double margin = 0.1) {
  if (classes == 0) throw InvalidArgument("class count must be positive");
  return std::max(factor * previous_score, 1.0 / classes + margin);
}

struct Verdict {
  std::string model_id;
  uint32_t round = 0;
  double encrypted_accuracy = 0;
  double worst_class_accuracy = 0;
  VerifierMetric metric = VerifierMetric::worst_class;
  double score = 0;
  double threshold = 0;
  bool accepted = false;
  double wall_time_ms = 0;

  nlohmann::json to_json() const {
    return {{"model_id", model_id},
            {"round", round},
            {"encrypted_accuracy", encrypted_accuracy},
            {"worst_class_accuracy", worst_class_accuracy},
            {"metric", metric_name(metric)},
            {"score", score},
            {"threshold", threshold},
            {"accepted", accepted},
            {"wall_time_ms", wall_time_ms}};
  }
};

struct VerifyRequest {
  std::string model_id;
  uint32_t round = 0;
  double threshold = 0;
  VerifierMetric metric = VerifierMetric::worst_class;
  FssConfig cfg;
};

// The verifier's side: shares and public topology in, verdict out.
inline Verdict verify_encrypted(const EncryptedModel& em, const Dataset& testset, const VerifyRequest& req,
                                Dealer& dealer) {
  if (testset.empty()) throw InvalidArgument("verification needs a non-empty test set");
  if (req.threshold < 0 || req.threshold > 1) throw InvalidArgument("threshold must lie in [0, 1]");
  const auto start = std::chrono::steady_clock::now();
  const EncryptedBatch eb = encrypt_batch(testset, em.cfg, dealer);
  const InferenceOutputs out = encrypted_infer(em, eb, dealer);
  Verdict v;
  v.model_id = req.model_id;
  v.round = req.round;
  v.metric = req.metric;
  v.encrypted_accuracy = accuracy_of(out.predictions, testset.labels);
  const auto per_class = per_class_accuracy(out.predictions, testset.labels, testset.class_count);
  v.worst_class_accuracy = *std::min_element(per_class.begin(), per_class.end());
  v.score = req.metric == VerifierMetric::accuracy ? v.encrypted_accuracy : v.worst_class_accuracy;
  v.threshold = req.threshold;
  v.accepted = v.score >= req.threshold;
  v.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return v;
}

// Client side shares the model, then hands only shares to the verifier.
inline Verdict verify_local_model(const Model& m, const Dataset& testset, const VerifyRequest& req, Dealer& dealer) {
  if (testset.empty()) throw InvalidArgument("verification needs a non-empty test set");
  const EncryptedModel em = encrypt_model(m, req.cfg, dealer);
  return verify_encrypted(em, testset, req, dealer);
}

}  // namespace bcfl
