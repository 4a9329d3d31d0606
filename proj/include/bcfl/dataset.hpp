#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bcfl/errors.hpp"
#include "bcfl/tensor.hpp"

namespace bcfl {

// Labeled samples stored as one row-major feature matrix.
struct Dataset {
  Shape sample_shape;
  std::vector<double> features;  // count x shape_size(sample_shape)
  std::vector<uint32_t> labels;
  uint32_t class_count = 0;

  size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  size_t sample_size() const { return shape_size(sample_shape); }

  std::span<const double> sample(size_t i) const {
    return std::span<const double>(features).subspan(i * sample_size(), sample_size());
  }

  Tensor sample_tensor(size_t i) const {
    const auto s = sample(i);
    return Tensor(sample_shape, std::vector<double>(s.begin(), s.end()));
  }

  void validate() const {
    if (features.size() != labels.size() * sample_size()) throw ShapeMismatch("feature/label count mismatch");
    for (uint32_t l : labels) {
      if (l >= class_count) throw InvalidArgument("label " + std::to_string(l) + " out of range");
    }
  }

  void push_back(std::span<const double> x, uint32_t label) {
    if (x.size() != sample_size()) throw ShapeMismatch("sample size mismatch");
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  Dataset subset(std::span<const size_t> indices) const {
    Dataset out{sample_shape, {}, {}, class_count};
    out.features.reserve(indices.size() * sample_size());
    out.labels.reserve(indices.size());
    for (size_t i : indices) out.push_back(sample(i), labels[i]);
    return out;
  }
};

}  // namespace bcfl
