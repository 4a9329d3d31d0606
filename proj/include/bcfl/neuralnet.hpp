#pragma once

// Plaintext feedforward networks: construction, inference, mini-batch
// training with softmax cross-entropy, canonical serialization, digests.
//
// Parameters live in declaration order (per parametric layer: weights then
// bias), which is also the order used by the aggregation protocol.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "bcfl/crypto.hpp"
#include "bcfl/dataset.hpp"
#include "bcfl/errors.hpp"
#include "bcfl/random.hpp"
#include "bcfl/tensor.hpp"

namespace bcfl {

enum class LayerKind : uint8_t { dense = 1, conv2d = 2, relu = 3, avgpool = 4, flatten = 5 };

inline std::string layer_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

// dense: (in, out). conv2d: (in_channels, out_channels, kernel), stride 1,
// no padding. avgpool: (window), stride = window.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  uint32_t a = 0, b = 0, c = 0;

  static LayerSpec dense(uint32_t in, uint32_t out) { return {LayerKind::dense, in, out, 0}; }
  static LayerSpec conv2d(uint32_t in_ch, uint32_t out_ch, uint32_t kernel) {
    return {LayerKind::conv2d, in_ch, out_ch, kernel};
  }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0}; }
  static LayerSpec avgpool(uint32_t window) { return {LayerKind::avgpool, window, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0}; }

  bool parametric() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;  // dense: out x in; conv2d: out x in x k x k
  Tensor bias;    // out

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Model {
  Shape input_shape;
  std::vector<Layer> layers;

  size_t param_count() const {
    size_t j = 0;
    for (const auto& l : layers) j += l.weight.size() + l.bias.size();
    return j;
  }

  friend bool operator==(const Model&, const Model&) = default;
};

// Output shape of one layer, or ShapeMismatch.
inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != spec.a) {
        throw ShapeMismatch("dense(" + std::to_string(spec.a) + ") cannot take " + shape_string(in));
      }
      return {spec.b};
    case LayerKind::conv2d:
      if (in.size() != 3 || in[0] != spec.a || in[1] < spec.c || in[2] < spec.c || spec.c == 0) {
        throw ShapeMismatch("conv2d cannot take " + shape_string(in));
      }
      return {spec.b, in[1] - spec.c + 1, in[2] - spec.c + 1};
    case LayerKind::relu:
      return in;
    case LayerKind::avgpool:
      if (in.size() != 3 || spec.a == 0 || in[1] % spec.a || in[2] % spec.a) {
        throw ShapeMismatch("avgpool cannot take " + shape_string(in));
      }
      return {in[0], in[1] / spec.a, in[2] / spec.a};
    case LayerKind::flatten:
      return {shape_size(in)};
  }
  throw ShapeMismatch("unknown layer kind");
}

// Shapes flowing between layers: [input, after layer 0, ...].
inline std::vector<Shape> layer_shapes(const Model& m) {
  std::vector<Shape> shapes{m.input_shape};
  for (const auto& l : m.layers) {
    shapes.push_back(layer_output_shape(l.spec, shapes.back()));
    if (l.spec.parametric()) {
      const size_t out = l.spec.b;
      const size_t wsize = l.spec.kind == LayerKind::dense ? size_t{l.spec.a} * out
                                                            : out * l.spec.a * l.spec.c * l.spec.c;
      if (l.weight.size() != wsize || l.bias.size() != out) throw ShapeMismatch("parameter tensor size mismatch");
    } else if (l.weight.size() || l.bias.size()) {
      throw ShapeMismatch(layer_name(l.spec.kind) + " carries parameters");
    }
  }
  return shapes;
}

inline void validate_model(const Model& m) {
  const auto shapes = layer_shapes(m);
  if (shapes.back().size() != 1) throw ShapeMismatch("model must end in a flat logit vector");
  for (const auto& l : m.layers) {
    if (!l.spec.parametric()) continue;
    l.weight.validate();
    l.bias.validate();
  }
}

inline Model build_model(Shape input_shape, const std::vector<LayerSpec>& specs, uint64_t seed) {
  Model m{std::move(input_shape), {}};
  Rng rng(seed);
  for (const auto& spec : specs) {
    Layer l{spec, {}, {}};
    if (spec.kind == LayerKind::dense || spec.kind == LayerKind::conv2d) {
      const size_t fan_in = spec.kind == LayerKind::dense ? spec.a : size_t{spec.a} * spec.c * spec.c;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      l.weight = spec.kind == LayerKind::dense ? Tensor({spec.b, spec.a}) : Tensor({spec.b, spec.a, spec.c, spec.c});
      l.bias = Tensor({spec.b});
      for (auto& w : l.weight.data) w = uniform_real(rng, -bound, bound);
      for (auto& b : l.bias.data) b = uniform_real(rng, -bound, bound);
    }
    m.layers.push_back(std::move(l));
  }
  validate_model(m);
  return m;
}

inline Model make_mlp(uint32_t inputs, uint32_t hidden, uint32_t classes, uint64_t seed) {
  return build_model({inputs}, {LayerSpec::dense(inputs, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, classes)},
                     seed);
}

// conv(k) -> relu -> avgpool(2) -> flatten -> dense.
inline Model make_cnn(uint32_t channels, uint32_t height, uint32_t width, uint32_t filters, uint32_t kernel,
                      uint32_t classes, uint64_t seed) {
  const uint32_t oh = height - kernel + 1, ow = width - kernel + 1;
  if (oh % 2 || ow % 2) throw ShapeMismatch("conv output must be even for 2x2 pooling");
  const uint32_t flat = filters * (oh / 2) * (ow / 2);
  return build_model({channels, height, width},
                     {LayerSpec::conv2d(channels, filters, kernel), LayerSpec::relu(), LayerSpec::avgpool(2),
                      LayerSpec::flatten(), LayerSpec::dense(flat, classes)},
                     seed);
}

// ---------------------------------------------------------------------------
// Layer kernels on a single sample.

namespace detail {

inline void dense_forward(const Layer& l, std::span<const double> x, std::vector<double>& y) {
  const size_t in = l.spec.a, out = l.spec.b;
  y.assign(out, 0.0);
  for (size_t o = 0; o < out; ++o) {
    const double* w = l.weight.data.data() + o * in;
    double acc = l.bias.data[o];
    for (size_t i = 0; i < in; ++i) acc += w[i] * x[i];
    y[o] = acc;
  }
}

inline void conv_forward(const Layer& l, const Shape& in_shape, std::span<const double> x, std::vector<double>& y) {
  const size_t ci = l.spec.a, co = l.spec.b, k = l.spec.c;
  const size_t h = in_shape[1], w = in_shape[2], oh = h - k + 1, ow = w - k + 1;
  y.assign(co * oh * ow, 0.0);
  for (size_t o = 0; o < co; ++o) {
    for (size_t i = 0; i < oh; ++i) {
      for (size_t j = 0; j < ow; ++j) {
        double acc = l.bias.data[o];
        for (size_t c = 0; c < ci; ++c) {
          for (size_t ki = 0; ki < k; ++ki) {
            for (size_t kj = 0; kj < k; ++kj) {
              acc += l.weight.data[((o * ci + c) * k + ki) * k + kj] * x[(c * h + i + ki) * w + j + kj];
            }
          }
        }
        y[(o * oh + i) * ow + j] = acc;
      }
    }
  }
}

inline void avgpool_forward(size_t window, const Shape& in_shape, std::span<const double> x, std::vector<double>& y) {
  const size_t c = in_shape[0], h = in_shape[1], w = in_shape[2], oh = h / window, ow = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  y.assign(c * oh * ow, 0.0);
  for (size_t ch = 0; ch < c; ++ch) {
    for (size_t i = 0; i < oh; ++i) {
      for (size_t j = 0; j < ow; ++j) {
        double acc = 0;
        for (size_t di = 0; di < window; ++di) {
          for (size_t dj = 0; dj < window; ++dj) acc += x[(ch * h + i * window + di) * w + j * window + dj];
        }
        y[(ch * oh + i) * ow + j] = acc * inv;
      }
    }
  }
}

inline void layer_forward(const Layer& l, const Shape& in_shape, std::span<const double> x, std::vector<double>& y) {
  switch (l.spec.kind) {
    case LayerKind::dense: dense_forward(l, x, y); return;
    case LayerKind::conv2d: conv_forward(l, in_shape, x, y); return;
    case LayerKind::relu:
      y.resize(x.size());
      for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
      return;
    case LayerKind::avgpool: avgpool_forward(l.spec.a, in_shape, x, y); return;
    case LayerKind::flatten: y.assign(x.begin(), x.end()); return;
  }
}

}  // namespace detail

// Logits for one sample. Softmax is omitted: classification is the argmax.
inline std::vector<double> forward(const Model& m, std::span<const double> input,
                                   const std::vector<Shape>& shapes) {
  std::vector<double> cur(input.begin(), input.end()), next;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    detail::layer_forward(m.layers[i], shapes[i], cur, next);
    cur.swap(next);
  }
  return cur;
}

inline Tensor forward(const Model& m, const Tensor& input) {
  const auto shapes = layer_shapes(m);
  if (input.shape != m.input_shape) {
    throw ShapeMismatch("input " + shape_string(input.shape) + " does not match model input " +
                        shape_string(m.input_shape));
  }
  return Tensor(shapes.back(), forward(m, input.data, shapes));
}

// Lowest index wins ties.
inline size_t argmax(std::span<const double> v) {
  size_t best = 0;
  for (size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline std::vector<uint32_t> predict(const Model& m, const Dataset& data) {
  const auto shapes = layer_shapes(m);
  if (data.sample_shape != m.input_shape) throw ShapeMismatch("dataset shape does not match model input");
  std::vector<uint32_t> out(data.size());
  for (size_t i = 0; i < data.size(); ++i) out[i] = static_cast<uint32_t>(argmax(forward(m, data.sample(i), shapes)));
  return out;
}

inline double accuracy_of(std::span<const uint32_t> predictions, std::span<const uint32_t> labels) {
  if (labels.empty()) throw InvalidArgument("accuracy over an empty set");
  size_t hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// Accuracy restricted to each class; classes absent from `labels` are
// reported as 1.0 so they never drag a minimum down.
inline std::vector<double> per_class_accuracy(std::span<const uint32_t> predictions, std::span<const uint32_t> labels,
                                              uint32_t classes) {
  std::vector<size_t> hits(classes, 0), totals(classes, 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    ++totals[labels[i]];
    hits[labels[i]] += predictions[i] == labels[i];
  }
  std::vector<double> out(classes, 1.0);
  for (uint32_t c = 0; c < classes; ++c) {
    if (totals[c]) out[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
  }
  return out;
}

inline double evaluate(const Model& m, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("evaluate on an empty dataset");
  return accuracy_of(predict(m, data), data.labels);
}

// ---------------------------------------------------------------------------
// Parameters as one flat vector in declaration order.

inline std::vector<double> flatten_params(const Model& m) {
  std::vector<double> out;
  out.reserve(m.param_count());
  for (const auto& l : m.layers) {
    out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
    out.insert(out.end(), l.bias.data.begin(), l.bias.data.end());
  }
  return out;
}

inline Model with_params(const Model& templ, std::span<const double> params) {
  if (params.size() != templ.param_count()) throw ShapeMismatch("parameter vector length mismatch");
  Model m = templ;
  size_t pos = 0;
  for (auto& l : m.layers) {
    for (auto& w : l.weight.data) w = params[pos++];
    for (auto& b : l.bias.data) b = params[pos++];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training.

enum class Optimizer { sgd, adam };

struct TrainConfig {
  double learning_rate = 0.05;
  uint32_t epochs = 2;
  uint32_t batch_size = 16;
  uint64_t seed = 0;
  Optimizer optimizer = Optimizer::sgd;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be >= 0");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  }
};

namespace detail {

// Accumulates d(loss)/d(params) for one sample into `grad` (flat layout);
// returns the sample's cross-entropy.
inline double backprop_sample(const Model& m, const std::vector<Shape>& shapes, std::span<const double> x,
                              uint32_t label, std::span<double> grad) {
  const size_t L = m.layers.size();
  std::vector<std::vector<double>> acts(L + 1);
  acts[0].assign(x.begin(), x.end());
  for (size_t i = 0; i < L; ++i) layer_forward(m.layers[i], shapes[i], acts[i], acts[i + 1]);

  const auto& logits = acts[L];
  const double mx = *std::max_element(logits.begin(), logits.end());
  double denom = 0;
  for (double z : logits) denom += std::exp(z - mx);
  std::vector<double> delta(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) delta[k] = std::exp(logits[k] - mx) / denom - (k == label ? 1.0 : 0.0);
  const double loss = -(logits[label] - mx - std::log(denom));

  std::vector<size_t> offsets(L + 1, 0);
  for (size_t i = 0; i < L; ++i) offsets[i + 1] = offsets[i] + m.layers[i].weight.size() + m.layers[i].bias.size();

  for (size_t idx = L; idx-- > 0;) {
    const Layer& l = m.layers[idx];
    const auto& in = acts[idx];
    std::vector<double> din(in.size(), 0.0);
    double* gw = grad.data() + offsets[idx];
    double* gb = gw + l.weight.size();
    switch (l.spec.kind) {
      case LayerKind::dense: {
        const size_t ni = l.spec.a, no = l.spec.b;
        for (size_t o = 0; o < no; ++o) {
          const double d = delta[o];
          gb[o] += d;
          const double* w = l.weight.data.data() + o * ni;
          for (size_t i = 0; i < ni; ++i) {
            gw[o * ni + i] += d * in[i];
            din[i] += w[i] * d;
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const size_t ci = l.spec.a, co = l.spec.b, k = l.spec.c;
        const size_t h = shapes[idx][1], w = shapes[idx][2], oh = h - k + 1, ow = w - k + 1;
        for (size_t o = 0; o < co; ++o) {
          for (size_t i = 0; i < oh; ++i) {
            for (size_t j = 0; j < ow; ++j) {
              const double d = delta[(o * oh + i) * ow + j];
              gb[o] += d;
              for (size_t c = 0; c < ci; ++c) {
                for (size_t ki = 0; ki < k; ++ki) {
                  for (size_t kj = 0; kj < k; ++kj) {
                    const size_t wi = ((o * ci + c) * k + ki) * k + kj;
                    const size_t xi = (c * h + i + ki) * w + j + kj;
                    gw[wi] += d * in[xi];
                    din[xi] += l.weight.data[wi] * d;
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        for (size_t i = 0; i < in.size(); ++i) din[i] = in[i] > 0 ? delta[i] : 0.0;
        break;
      case LayerKind::avgpool: {
        const size_t win = l.spec.a, c = shapes[idx][0], h = shapes[idx][1], w = shapes[idx][2];
        const size_t oh = h / win, ow = w / win;
        const double inv = 1.0 / static_cast<double>(win * win);
        for (size_t ch = 0; ch < c; ++ch) {
          for (size_t i = 0; i < oh; ++i) {
            for (size_t j = 0; j < ow; ++j) {
              const double d = delta[(ch * oh + i) * ow + j] * inv;
              for (size_t di = 0; di < win; ++di) {
                for (size_t dj = 0; dj < win; ++dj) din[(ch * h + i * win + di) * w + j * win + dj] += d;
              }
            }
          }
        }
        break;
      }
      case LayerKind::flatten:
        din = delta;
        break;
    }
    delta.swap(din);
  }
  return loss;
}

}  // namespace detail

// Mean cross-entropy and its gradient over the selected samples.
inline double loss_and_gradient(const Model& m, const Dataset& data, std::span<const size_t> indices,
                                std::vector<double>& grad) {
  const auto shapes = layer_shapes(m);
  grad.assign(m.param_count(), 0.0);
  double loss = 0;
  for (size_t i : indices) loss += detail::backprop_sample(m, shapes, data.sample(i), data.labels[i], grad);
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& g : grad) g *= inv;
  return loss * inv;
}

// Local update from a starting model: repeated M <- M - lr * grad F(M, batch)
// over seeded mini-batches.
inline Model train_local(const Model& start, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train_local on an empty dataset");
  if (data.sample_shape != start.input_shape) throw ShapeMismatch("dataset shape does not match model input");
  const size_t classes = layer_shapes(start).back()[0];
  for (uint32_t l : data.labels) {
    if (l >= classes) throw InvalidArgument("label exceeds the model's class count");
  }
  std::vector<double> params = flatten_params(start);
  Model current = start;
  Rng rng(cfg.seed);
  std::vector<size_t> order(data.size());
  std::vector<double> grad, m1, m2;
  if (cfg.optimizer == Optimizer::adam) {
    m1.assign(params.size(), 0.0);
    m2.assign(params.size(), 0.0);
  }
  uint64_t step = 0;
  for (uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(std::span<size_t>(order), rng);
    for (size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const size_t end = std::min(order.size(), begin + cfg.batch_size);
      loss_and_gradient(current, data, std::span<const size_t>(order).subspan(begin, end - begin), grad);
      ++step;
      if (cfg.optimizer == Optimizer::sgd) {
        for (size_t j = 0; j < params.size(); ++j) params[j] -= cfg.learning_rate * grad[j];
      } else {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        for (size_t j = 0; j < params.size(); ++j) {
          m1[j] = b1 * m1[j] + (1 - b1) * grad[j];
          m2[j] = b2 * m2[j] + (1 - b2) * grad[j] * grad[j];
          params[j] -= cfg.learning_rate * (m1[j] / c1) / (std::sqrt(m2[j] / c2) + eps);
        }
      }
      current = with_params(current, params);
    }
  }
  return current;
}

// ---------------------------------------------------------------------------
// Canonical serialization:
//   "BCFM" | version u32 | input rank u32 | dims u32... | layer count u32 |
//   per layer { kind u8 | a u32 | b u32 | c u32 } |
//   parameters f64 in declaration order
// Little-endian throughout.

inline constexpr uint32_t kModelFormatVersion = 1;

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::span<const uint8_t> raw(size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated input");
  }
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<uint8_t> serialize(const Model& m) {
  std::vector<uint8_t> out = {'B', 'C', 'F', 'M'};
  detail::put_u32(out, kModelFormatVersion);
  detail::put_u32(out, static_cast<uint32_t>(m.input_shape.size()));
  for (size_t d : m.input_shape) detail::put_u32(out, static_cast<uint32_t>(d));
  detail::put_u32(out, static_cast<uint32_t>(m.layers.size()));
  for (const auto& l : m.layers) {
    out.push_back(static_cast<uint8_t>(l.spec.kind));
    detail::put_u32(out, l.spec.a);
    detail::put_u32(out, l.spec.b);
    detail::put_u32(out, l.spec.c);
  }
  for (double v : flatten_params(m)) detail::put_f64(out, v);
  return out;
}

inline Model deserialize_model(std::span<const uint8_t> bytes) {
  detail::Reader r(bytes);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), "BCFM", 4) != 0) throw FormatError("not a model file");
  if (r.u32() != kModelFormatVersion) throw FormatError("unsupported model format version");
  const uint32_t rank = r.u32();
  if (rank == 0 || rank > 4) throw FormatError("bad input rank");
  Model m;
  for (uint32_t i = 0; i < rank; ++i) m.input_shape.push_back(r.u32());
  const uint32_t count = r.u32();
  if (count > 1024) throw FormatError("implausible layer count");
  std::vector<LayerSpec> specs;
  for (uint32_t i = 0; i < count; ++i) {
    LayerSpec s;
    const uint8_t kind = r.u8();
    if (kind < 1 || kind > 5) throw FormatError("unknown layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.a = r.u32();
    s.b = r.u32();
    s.c = r.u32();
    specs.push_back(s);
  }
  // Allocate parameter tensors from the descriptors, then fill.
  Shape cur = m.input_shape;
  size_t expected = 0;
  for (const auto& s : specs) {
    Layer l{s, {}, {}};
    try {
      cur = layer_output_shape(s, cur);
    } catch (const ShapeMismatch& e) {
      throw FormatError(std::string("inconsistent layer descriptors: ") + e.what());
    }
    if (s.kind == LayerKind::dense) {
      l.weight = Tensor({s.b, s.a});
      l.bias = Tensor({s.b});
    } else if (s.kind == LayerKind::conv2d) {
      l.weight = Tensor({s.b, s.a, s.c, s.c});
      l.bias = Tensor({s.b});
    }
    expected += l.weight.size() + l.bias.size();
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != expected * 8) throw FormatError("parameter payload length mismatch");
  for (auto& l : m.layers) {
    for (auto& w : l.weight.data) w = r.f64();
    for (auto& b : l.bias.data) b = r.f64();
  }
  try {
    validate_model(m);
  } catch (const Error& e) {
    throw FormatError(std::string("invalid model: ") + e.what());
  }
  return m;
}

struct ModelDigest {
  Digest sha256{};

  std::string hex() const { return to_hex(sha256); }
  friend bool operator==(const ModelDigest&, const ModelDigest&) = default;
};

inline ModelDigest digest_bytes(std::span<const uint8_t> bytes) { return {sha256(bytes)}; }
inline ModelDigest digest(const Model& m) { return digest_bytes(serialize(m)); }

}  // namespace bcfl
