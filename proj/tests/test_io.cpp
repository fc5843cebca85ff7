#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xagg/io.hpp"
#include "xagg/rng.hpp"

using namespace xagg;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("xagg_test_" + std::to_string(::getpid()) + "_" +
                                         std::to_string(counter_++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

AttributionStack random_stack(const Shape& shape, std::size_t k, Rng& rng) {
  std::vector<std::string> names;
  std::vector<AttributionMap> cols;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back("method_" + std::to_string(i));
    cols.push_back(normalize(rng_uniform(rng, -1.0, 1.0, shape.d()), shape));
  }
  return AttributionStack(shape, names, cols);
}

std::vector<unsigned char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(StackFile, RoundTripIsStable) {
  TempDir tmp;
  Rng rng(1);
  const auto stack = random_stack(Shape(8, 8, 1), 3, rng);

  const auto dir1 = tmp.path() / "s1";
  const auto dir2 = tmp.path() / "s2";
  save_stack(stack, dir1);
  const auto loaded = load_stack(dir1);
  save_stack(loaded, dir2);

  EXPECT_EQ(slurp(dir1 / "data.f32"), slurp(dir2 / "data.f32"));
  EXPECT_EQ(slurp(dir1 / "manifest.json"), slurp(dir2 / "manifest.json"));

  const auto reloaded = load_stack(dir2);
  EXPECT_EQ(loaded.method_names(), stack.method_names());
  for (std::size_t i = 0; i < stack.k(); ++i)
    EXPECT_EQ(loaded.column(i).values, reloaded.column(i).values);
}

TEST(StackFile, FlippedPayloadByteIsRejected) {
  TempDir tmp;
  Rng rng(2);
  const auto stack = random_stack(Shape(4, 4), 2, rng);
  const auto dir = tmp.path() / "s";
  save_stack(stack, dir);

  auto bytes = slurp(dir / "data.f32");
  bytes[7] ^= 0x20;
  std::ofstream(dir / "data.f32", std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<char*>(bytes.data()), bytes.size());

  EXPECT_THROW(load_stack(dir), FormatError);
}

TEST(StackFile, InconsistentDimsAreRejected) {
  TempDir tmp;
  Rng rng(3);
  const auto stack = random_stack(Shape(4, 4), 2, rng);
  const auto dir = tmp.path() / "s";
  save_stack(stack, dir);

  // manifest claims k=3 but payload holds 2 methods
  auto manifest = nlohmann::json::parse(std::string(
      reinterpret_cast<const char*>(slurp(dir / "manifest.json").data()),
      slurp(dir / "manifest.json").size()));
  manifest["k"] = 3;
  manifest["methods"] = {"a", "b", "c"};
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2);

  try {
    load_stack(dir);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(StackFile, GarbageManifestIsRejected) {
  TempDir tmp;
  fs::create_directories(tmp.path() / "s");
  std::ofstream(tmp.path() / "s" / "manifest.json") << "{not json";
  EXPECT_THROW(load_stack(tmp.path() / "s"), FormatError);
}

TEST(Pgm, AllZerosAndAllOnes) {
  TempDir tmp;
  const Shape shape(4, 6);
  const AttributionMap zeros{shape, std::vector<double>(24, 0.0), true};
  const AttributionMap ones{shape, std::vector<double>(24, 1.0), true};

  export_heatmap(zeros, tmp.path() / "z.pgm");
  export_heatmap(ones, tmp.path() / "o.pgm");

  const auto zb = slurp(tmp.path() / "z.pgm");
  const auto ob = slurp(tmp.path() / "o.pgm");
  const std::string header = "P5\n6 4\n255\n";
  ASSERT_EQ(zb.size(), header.size() + 24);
  for (std::size_t i = header.size(); i < zb.size(); ++i) EXPECT_EQ(zb[i], 0);
  for (std::size_t i = header.size(); i < ob.size(); ++i) EXPECT_EQ(ob[i], 255);
}

TEST(Pgm, RoundTripWithinQuantization) {
  TempDir tmp;
  const Shape shape(8, 8);
  Rng rng(4);
  const AttributionMap map{shape, rng_uniform(rng, 0.0, 1.0, 64), false};
  export_heatmap(map, tmp.path() / "m.pgm");

  // Reference reader: parse the P5 header, then raw bytes.
  const auto bytes = slurp(tmp.path() / "m.pgm");
  const std::string text(bytes.begin(), bytes.end());
  int w = 0, h = 0, maxval = 0, consumed = 0;
  ASSERT_EQ(std::sscanf(text.c_str(), "P5\n%d %d\n%d\n%n", &w, &h, &maxval, &consumed), 3);
  ASSERT_EQ(w, 8);
  ASSERT_EQ(h, 8);
  ASSERT_EQ(maxval, 255);
  ASSERT_EQ(bytes.size(), static_cast<std::size_t>(consumed) + 64);
  for (std::size_t i = 0; i < 64; ++i) {
    const double round_tripped = bytes[consumed + i] / 255.0;
    EXPECT_NEAR(round_tripped, map.values[i], 1.0 / 255.0 + 1e-12);
  }
}

TEST(Csv, Rfc4180QuotingAndPrecision) {
  CsvWriter csv;
  csv.cell(std::string("name"));
  csv.cell(std::string("va,lue"));
  csv.cell(std::string("q\"uote"));
  csv.end_row();
  csv.cell(0.123456789123);
  csv.cell_missing();
  csv.cell(1.0 / 3.0);
  csv.end_row();
  EXPECT_EQ(csv.str(),
            "name,\"va,lue\",\"q\"\"uote\"\r\n"
            "0.123456789,,0.333333333\r\n");
}
