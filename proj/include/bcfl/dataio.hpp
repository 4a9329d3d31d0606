#pragma once

// Dataset sources (synthetic Gaussian clusters, IDX, CSV) and client
// sharding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bcfl/dataset.hpp"
#include "bcfl/errors.hpp"
#include "bcfl/random.hpp"

namespace bcfl {

struct SyntheticSpec {
  uint32_t classes = 4;
  uint32_t dims = 32;
  uint32_t per_class = 100;
  uint64_t seed = 0;
  double separation = 3.0;  // norm of each class mean
};

// Unit-variance Gaussian clusters around random class means of norm
// `separation`. Samples come out shuffled (seeded), not class-major.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw InvalidArgument("synthetic data needs at least 2 classes");
  if (spec.dims < 1) throw InvalidArgument("synthetic data needs at least 1 dimension");
  Rng rng(spec.seed);
  std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dims));
  for (auto& mu : means) {
    double norm = 0;
    for (auto& v : mu) {
      v = standard_normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : mu) v *= spec.separation / norm;
  }
  std::vector<size_t> order(static_cast<size_t>(spec.classes) * spec.per_class);
  std::iota(order.begin(), order.end(), size_t{0});
  shuffle_in_place(std::span<size_t>(order), rng);

  Dataset ds{{spec.dims}, {}, {}, spec.classes};
  ds.features.reserve(order.size() * spec.dims);
  std::vector<double> x(spec.dims);
  for (size_t slot : order) {
    const uint32_t label = static_cast<uint32_t>(slot / spec.per_class);
    for (uint32_t d = 0; d < spec.dims; ++d) x[d] = means[label][d] + standard_normal(rng);
    ds.push_back(x, label);
  }
  return ds;
}

inline Dataset gen_synthetic(uint32_t classes, uint32_t dims, uint32_t per_class, uint64_t seed) {
  return gen_synthetic(SyntheticSpec{classes, dims, per_class, seed, 3.0});
}

// Seeded shuffle, then contiguous equal shards; the last shard takes the
// remainder.
inline std::vector<Dataset> partition(const Dataset& ds, size_t clients, uint64_t seed) {
  if (clients < 1) throw InvalidArgument("partition needs at least one client");
  if (clients > ds.size()) throw InvalidArgument("more clients than samples");
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  shuffle_in_place(std::span<size_t>(order), rng);
  const size_t each = ds.size() / clients;
  std::vector<Dataset> shards;
  for (size_t c = 0; c < clients; ++c) {
    const size_t begin = c * each;
    const size_t end = c + 1 == clients ? ds.size() : begin + each;
    shards.push_back(ds.subset(std::span<const size_t>(order).subspan(begin, end - begin)));
  }
  return shards;
}

// Consecutive slices of the given sizes (in order) from a seeded shuffle.
inline std::vector<Dataset> split_counts(const Dataset& ds, const std::vector<size_t>& counts, uint64_t seed) {
  const size_t total = std::accumulate(counts.begin(), counts.end(), size_t{0});
  if (total > ds.size()) throw InvalidArgument("split asks for more samples than available");
  std::vector<size_t> order(ds.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(seed);
  shuffle_in_place(std::span<size_t>(order), rng);
  std::vector<Dataset> out;
  size_t pos = 0;
  for (size_t n : counts) {
    out.push_back(ds.subset(std::span<const size_t>(order).subspan(pos, n)));
    pos += n;
  }
  return out;
}

// Reshape every sample to a flat vector.
inline Dataset flattened(Dataset ds) {
  ds.sample_shape = {ds.sample_size()};
  return ds;
}

// ---------------------------------------------------------------------------
// IDX (big-endian headers, unsigned byte payloads scaled to [0, 1]).

inline constexpr uint32_t kIdxImageMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline uint32_t be32(const std::vector<uint8_t>& b, size_t pos) {
  if (pos + 4 > b.size()) throw FormatError("truncated IDX header");
  return static_cast<uint32_t>(b[pos]) << 24 | static_cast<uint32_t>(b[pos + 1]) << 16 |
         static_cast<uint32_t>(b[pos + 2]) << 8 | b[pos + 3];
}

inline void put_be32(std::vector<uint8_t>& b, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<uint8_t>(v >> s));
}

inline uint8_t to_pixel(double v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace detail

inline Dataset parse_idx(const std::vector<uint8_t>& images, const std::vector<uint8_t>& labels,
                         uint32_t class_count = 10) {
  if (detail::be32(images, 0) != kIdxImageMagic) throw FormatError("image file magic mismatch");
  if (detail::be32(labels, 0) != kIdxLabelMagic) throw FormatError("label file magic mismatch");
  const uint32_t count = detail::be32(images, 4), rows = detail::be32(images, 8), cols = detail::be32(images, 12);
  if (detail::be32(labels, 4) != count) throw FormatError("image and label counts differ");
  const size_t pixels = static_cast<size_t>(rows) * cols;
  if (images.size() != 16 + count * pixels) throw FormatError("image payload truncated or oversized");
  if (labels.size() != 8 + static_cast<size_t>(count)) throw FormatError("label payload truncated or oversized");
  Dataset ds{{1, rows, cols}, {}, {}, class_count};
  ds.features.resize(count * pixels);
  ds.labels.resize(count);
  for (size_t i = 0; i < count * pixels; ++i) ds.features[i] = images[16 + i] / 255.0;
  for (size_t i = 0; i < count; ++i) {
    ds.labels[i] = labels[8 + i];
    if (ds.labels[i] >= class_count) throw FormatError("label " + std::to_string(ds.labels[i]) + " out of range");
  }
  return ds;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, uint32_t class_count = 10) {
  return parse_idx(detail::read_file(images_path), detail::read_file(labels_path), class_count);
}

// Sample shape must be (1, rows, cols) or (rows, cols).
inline void write_idx(const Dataset& ds, const std::string& images_path, const std::string& labels_path) {
  const auto& s = ds.sample_shape;
  const bool ok = (s.size() == 3 && s[0] == 1) || s.size() == 2;
  if (!ok) throw ShapeMismatch("IDX export needs single-channel images");
  const uint32_t rows = static_cast<uint32_t>(s[s.size() - 2]), cols = static_cast<uint32_t>(s.back());
  std::vector<uint8_t> img, lab;
  detail::put_be32(img, kIdxImageMagic);
  detail::put_be32(img, static_cast<uint32_t>(ds.size()));
  detail::put_be32(img, rows);
  detail::put_be32(img, cols);
  for (double v : ds.features) img.push_back(detail::to_pixel(v));
  detail::put_be32(lab, kIdxLabelMagic);
  detail::put_be32(lab, static_cast<uint32_t>(ds.size()));
  for (uint32_t l : ds.labels) lab.push_back(static_cast<uint8_t>(l));
  detail::write_file(images_path, img);
  detail::write_file(labels_path, lab);
}

// ---------------------------------------------------------------------------
// CSV: "label,p0,p1,..." per line, pixels 0-255. 784-pixel rows are read as
// 1x28x28 images, anything else as flat vectors.

inline Dataset parse_csv(std::istream& in, uint32_t class_count = 10) {
  Dataset ds;
  ds.class_count = class_count;
  std::string line;
  size_t line_no = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    row.clear();
    long label = -1;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw FormatError("line " + std::to_string(line_no) + ": not a number: " + cell);
      if (first) {
        label = std::lround(v);
        first = false;
      } else {
        row.push_back(v / 255.0);
      }
    }
    if (label < 0 || label >= static_cast<long>(class_count)) {
      throw FormatError("line " + std::to_string(line_no) + ": label out of range");
    }
    if (row.empty()) throw FormatError("line " + std::to_string(line_no) + ": no pixels");
    if (ds.sample_shape.empty()) {
      ds.sample_shape = row.size() == 784 ? Shape{1, 28, 28} : Shape{row.size()};
    }
    if (row.size() != ds.sample_size()) throw FormatError("line " + std::to_string(line_no) + ": ragged row");
    ds.push_back(row, static_cast<uint32_t>(label));
  }
  if (ds.empty()) throw FormatError("CSV holds no samples");
  return ds;
}

inline Dataset load_csv(const std::string& path, uint32_t class_count = 10) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path);
  return parse_csv(in, class_count);
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path);
  for (size_t i = 0; i < ds.size(); ++i) {
    out << ds.labels[i];
    for (double v : ds.sample(i)) out << ',' << static_cast<int>(detail::to_pixel(v));
    out << '\n';
  }
}

}  // namespace bcfl
