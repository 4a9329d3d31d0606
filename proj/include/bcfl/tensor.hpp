#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "bcfl/errors.hpp"

namespace bcfl {

using Shape = std::vector<size_t>;

inline size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

// Dense row-major real tensor.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) { validate(); }

  size_t size() const { return data.size(); }

  void validate() const {
    if (data.size() != shape_size(shape)) {
      throw ShapeMismatch("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                          shape_string(shape));
    }
    for (double v : data) {
      if (!std::isfinite(v)) throw InvalidArgument("tensor holds a non-finite value");
    }
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace bcfl
