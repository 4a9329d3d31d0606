#include "bcfl/dataio.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include "bcfl/neuralnet.hpp"

namespace bcfl {
namespace {

const std::string kData = BCFL_TEST_DATA_DIR;

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("bcfl-dataio-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(SyntheticTest, ShapeAndCounts) {
  const Dataset ds = gen_synthetic(4, 8, 10, 1);
  EXPECT_EQ(ds.size(), 40u);
  EXPECT_EQ(ds.sample_shape, Shape{8});
  std::map<uint32_t, int> counts;
  for (uint32_t l : ds.labels) ++counts[l];
  for (uint32_t c = 0; c < 4; ++c) EXPECT_EQ(counts[c], 10);
}

TEST(SyntheticTest, SeedDeterminesOutput) {
  EXPECT_EQ(gen_synthetic(4, 8, 10, 1).features, gen_synthetic(4, 8, 10, 1).features);
  EXPECT_NE(gen_synthetic(4, 8, 10, 1).features, gen_synthetic(4, 8, 10, 2).features);
}

TEST(SyntheticTest, ClustersAreLinearlySeparable) {
  const Dataset ds = gen_synthetic(SyntheticSpec{4, 16, 100, 3, 6.0});
  const Model linear = build_model({16}, {LayerSpec::dense(16, 4)}, 4);
  TrainConfig cfg;
  cfg.epochs = 30;
  EXPECT_GT(evaluate(train_local(linear, ds, cfg), ds), 0.90);
}

TEST(IdxTest, LoadsFixture) {
  const Dataset ds = load_idx(kData + "/fixture-images.idx3-ubyte", kData + "/fixture-labels.idx1-ubyte");
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.sample_shape, (Shape{1, 28, 28}));
  EXPECT_EQ(ds.labels, (std::vector<uint32_t>{3, 1, 4, 1}));
  EXPECT_DOUBLE_EQ(ds.sample(0)[0], 1.0);
  // pixel(n, r, c) = (61n + 7r + 3c) mod 256
  EXPECT_DOUBLE_EQ(ds.sample(2)[5 * 28 + 9], ((2 * 61 + 5 * 7 + 9 * 3) % 256) / 255.0);
  for (double v : ds.features) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(IdxTest, RejectsMalformedFiles) {
  auto img = detail::read_file(kData + "/fixture-images.idx3-ubyte");
  auto lab = detail::read_file(kData + "/fixture-labels.idx1-ubyte");
  auto bad_magic = img;
  bad_magic[3] = 0x01;
  EXPECT_THROW(parse_idx(bad_magic, lab), FormatError);
  auto truncated = img;
  truncated.pop_back();
  EXPECT_THROW(parse_idx(truncated, lab), FormatError);
  EXPECT_THROW(parse_idx(std::vector<uint8_t>(img.begin(), img.begin() + 6), lab), FormatError);
  auto bad_label = lab;
  bad_label[8] = 10;
  EXPECT_THROW(parse_idx(img, bad_label), FormatError);
  EXPECT_THROW(parse_idx(img, lab, 4), FormatError);  // label 4 with only 4 classes
  EXPECT_THROW(load_idx(kData + "/nope", kData + "/nope"), InvalidArgument);
}

TEST(IdxTest, WriteReadRoundTrip) {
  const Dataset ds = load_idx(kData + "/fixture-images.idx3-ubyte", kData + "/fixture-labels.idx1-ubyte");
  const auto dir = temp_dir("idx");
  write_idx(ds, dir / "i", dir / "l");
  const Dataset back = load_idx(dir / "i", dir / "l");
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.sample_shape, ds.sample_shape);
}

TEST(CsvTest, EmptyInputRejected) {
  std::istringstream empty("");
  EXPECT_THROW(parse_csv(empty), FormatError);
  std::istringstream blank("\n\n");
  EXPECT_THROW(parse_csv(blank), FormatError);
}

TEST(CsvTest, ParsesRowsAndRejectsBadOnes) {
  std::istringstream ok("2,0,255,51\n0,255,0,0\r\n");
  const Dataset ds = parse_csv(ok, 3);
  EXPECT_EQ(ds.sample_shape, Shape{3});
  EXPECT_EQ(ds.labels, (std::vector<uint32_t>{2, 0}));
  EXPECT_DOUBLE_EQ(ds.sample(0)[2], 0.2);
  std::istringstream ragged("1,0,0\n1,0\n");
  EXPECT_THROW(parse_csv(ragged), FormatError);
  std::istringstream label("7,0,0\n");
  EXPECT_THROW(parse_csv(label, 3), FormatError);
  std::istringstream junk("1,x,0\n");
  EXPECT_THROW(parse_csv(junk), FormatError);
}

TEST(CsvTest, WriteReadRoundTripKeepsImageShape) {
  const Dataset ds = load_idx(kData + "/fixture-images.idx3-ubyte", kData + "/fixture-labels.idx1-ubyte");
  const auto dir = temp_dir("csv");
  write_csv(ds, dir / "d.csv");
  const Dataset back = load_csv(dir / "d.csv");
  EXPECT_EQ(back.sample_shape, (Shape{1, 28, 28}));
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.features, ds.features);
}

std::multiset<std::pair<uint32_t, std::vector<double>>> rows(const Dataset& ds) {
  std::multiset<std::pair<uint32_t, std::vector<double>>> out;
  for (size_t i = 0; i < ds.size(); ++i) out.emplace(ds.labels[i], std::vector<double>(ds.sample(i).begin(), ds.sample(i).end()));
  return out;
}

TEST(PartitionTest, EvenAndRemainderShards) {
  const Dataset ds100 = gen_synthetic(4, 3, 25, 5);
  for (const auto& s : partition(ds100, 10, 1)) EXPECT_EQ(s.size(), 10u);
  const Dataset ds101 = ds100.subset(std::vector<size_t>{0}) ;
  Dataset plus = ds100;
  plus.push_back(ds101.sample(0), ds101.labels[0]);
  const auto shards = partition(plus, 10, 1);
  for (size_t c = 0; c < 9; ++c) EXPECT_EQ(shards[c].size(), 10u);
  EXPECT_EQ(shards[9].size(), 11u);
}

TEST(PartitionTest, Errors) {
  const Dataset ds = gen_synthetic(2, 3, 2, 5);
  EXPECT_THROW(partition(ds, 0, 1), InvalidArgument);
  EXPECT_THROW(partition(ds, 5, 1), InvalidArgument);
  EXPECT_THROW(split_counts(ds, {3, 2}, 1), InvalidArgument);
}

TEST(PartitionTest, FuzzUnionIsInputMultiset) {
  Rng rng(6);
  for (int t = 0; t < 1000; ++t) {
    const uint32_t per_class = 1 + static_cast<uint32_t>(uniform_index(rng, 15));
    const Dataset ds = gen_synthetic(2, 2, per_class, t);
    const size_t clients = 1 + uniform_index(rng, ds.size());
    const auto shards = partition(ds, clients, t);
    ASSERT_EQ(shards.size(), clients);
    std::multiset<std::pair<uint32_t, std::vector<double>>> joined;
    size_t total = 0;
    for (size_t c = 0; c < clients; ++c) {
      const size_t expect = c + 1 == clients ? ds.size() - (clients - 1) * (ds.size() / clients) : ds.size() / clients;
      ASSERT_EQ(shards[c].size(), expect);
      total += shards[c].size();
      auto r = rows(shards[c]);
      joined.insert(r.begin(), r.end());
    }
    ASSERT_EQ(total, ds.size());
    ASSERT_EQ(joined, rows(ds));
  }
}

TEST(PartitionTest, SplitCountsAreDisjoint) {
  const Dataset ds = gen_synthetic(4, 3, 25, 7);
  const auto parts = split_counts(ds, {60, 40}, 3);
  EXPECT_EQ(parts[0].size(), 60u);
  EXPECT_EQ(parts[1].size(), 40u);
  auto joined = rows(parts[0]);
  auto r = rows(parts[1]);
  joined.insert(r.begin(), r.end());
  EXPECT_EQ(joined, rows(ds));
}

}  // namespace
}  // namespace bcfl
