#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "swinq/data/dataset.hpp"
#include "swinq/errors.hpp"
#include "swinq/tensor/archive.hpp"

using namespace swinq;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("swinq_test_" + name);
  fs::remove_all(p);
  return p;
}

Image solid(std::size_t w, std::size_t h, std::uint8_t v) { return Image{w, h, std::vector<std::uint8_t>(w * h * 3, v)}; }

}  // namespace

TEST_CASE("ppm codec") {
  Image img{3, 2, {}};
  for (std::size_t i = 0; i < 18; ++i) img.rgb.push_back(static_cast<std::uint8_t>(i * 13));
  const auto bytes = encode_ppm(img);
  const Image back = decode_ppm(bytes);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  CHECK(back.rgb == img.rgb);
  const std::string commented = "P6\n# note\n1 1\n255\n";
  std::vector<std::uint8_t> c(commented.begin(), commented.end());
  c.insert(c.end(), {1, 2, 3});
  CHECK(decode_ppm(c).rgb == std::vector<std::uint8_t>{1, 2, 3});
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_ppm(truncated), DataError);
  const std::string p3 = "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(p3.begin(), p3.end())), DataError);
}

TEST_CASE("preprocess") {
  SUBCASE("identity geometry divides by 255") {
    Image img{4, 4, {}};
    for (std::size_t i = 0; i < 48; ++i) img.rgb.push_back(static_cast<std::uint8_t>(i * 5));
    PreprocessSpec spec = PreprocessSpec::synthetic(4);
    spec.mean = {0, 0, 0};
    spec.std = {1, 1, 1};
    const auto v = preprocess(img, spec);
    for (std::size_t i = 0; i < 48; ++i) CHECK(v[i] == static_cast<float>(i * 5) / 255.0f);
  }
  SUBCASE("gray 128") {
    const auto v = preprocess(solid(16, 16, 128), PreprocessSpec::synthetic(16));
    for (float x : v) CHECK(x == doctest::Approx(0.0039216).epsilon(1e-4));
  }
  SUBCASE("aspect handling") {
    const Image wide = solid(40, 20, 10);
    const Image r = resize_bilinear(wide, 20, 10);
    CHECK(r.width == 20);
    CHECK(r.height == 10);
    PreprocessSpec spec = PreprocessSpec::imagenet(10, 8);
    CHECK(preprocess(wide, spec).size() == 8 * 8 * 3);
    CHECK(preprocess(solid(20, 40, 10), spec).size() == 8 * 8 * 3);
  }
  SUBCASE("center crop picks the middle") {
    Image img = solid(5, 5, 0);
    img.rgb[(2 * 5 + 2) * 3] = 255;
    PreprocessSpec spec = PreprocessSpec::synthetic(5);
    spec.crop = 1;
    spec.mean = {0, 0, 0};
    spec.std = {1, 1, 1};
    CHECK(preprocess(img, spec)[0] == 1.0f);
  }
  SUBCASE("bilinear upsample of a ramp stays monotone and in range") {
    Image ramp{4, 1, {}};
    for (std::uint8_t v : {0, 80, 160, 240})
      for (int c = 0; c < 3; ++c) ramp.rgb.push_back(v);
    const Image up = resize_bilinear(ramp, 8, 2);
    for (std::size_t x = 1; x < 8; ++x) CHECK(up.rgb[x * 3] >= up.rgb[(x - 1) * 3]);
    CHECK(up.rgb[0] == 0);
    CHECK(up.rgb[7 * 3] == 240);
  }
  SUBCASE("invalid spec") {
    PreprocessSpec spec = PreprocessSpec::synthetic(8);
    spec.crop = 9;
    CHECK_THROWS_AS(preprocess(solid(8, 8, 1), spec), ConfigError);
  }
}

TEST_CASE("split counts") {
  CHECK(split_counts(100) == std::array<std::size_t, 3>{70, 20, 10});
  CHECK(split_counts(10) == std::array<std::size_t, 3>{7, 2, 1});
  CHECK(split_counts(33) == std::array<std::size_t, 3>{23, 6, 4});
}

TEST_CASE("synthetic data and indexing") {
  const fs::path root = scratch("synth");
  SyntheticSpec spec{4, 30, 8, 5};
  CHECK(generate_synthetic(root, spec) == 120);
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(root)) dirs += e.is_directory();
  CHECK(dirs == 4);
  CHECK(read_file_bytes(root / "class_02" / "img_0007.ppm") ==
        encode_ppm(synthetic_image(2, 4, 8, 5, 7)));

  const DatasetIndex a = index_and_split(root, 3);
  CHECK(a == index_and_split(root, 3));
  CHECK_FALSE(a.samples == index_and_split(root, 4).samples);
  CHECK(a.classes == std::vector<std::string>{"class_00", "class_01", "class_02", "class_03"});
  CHECK(a.samples.size() == 120);
  for (std::size_t c = 0; c < 4; ++c) {
    std::array<std::size_t, 3> counts{};
    for (const auto& s : a.samples)
      if (s.label == c) ++counts[static_cast<std::size_t>(s.split)];
    CHECK(counts == split_counts(30));
  }
  // interleaved: first four samples cover all classes
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.samples[i].label == i);

  const nlohmann::json j = a;
  CHECK(nlohmann::json::parse(j.dump()).get<DatasetIndex>() == a);

  const auto test = load_split(a, Split::test, PreprocessSpec::synthetic(8));
  CHECK(test.samples.size() == 4 * split_counts(30)[2]);
  CHECK(test.failed.empty());
  const auto calib = calibration_set(a, PreprocessSpec::synthetic(8), 32);
  CHECK(calib.samples.size() == 32);

  // a corrupt file is skipped and listed
  write_file_bytes(root / "class_01" / "zz_bad.ppm", std::vector<std::uint8_t>{'P', '6', '\n'});
  const DatasetIndex b = index_and_split(root, 3);
  CHECK(b.skipped == std::vector<std::string>{"class_01/zz_bad.ppm"});
  CHECK(b.samples.size() == 120);
  fs::remove_all(root);
}

TEST_CASE("index errors") {
  const fs::path root = scratch("few");
  CHECK_THROWS_AS(index_and_split(root, 0), DataError);
  fs::create_directories(root / "a");
  for (int i = 0; i < 9; ++i) save_ppm(root / "a" / ("i" + std::to_string(i) + ".ppm"), solid(2, 2, 3));
  CHECK_THROWS_AS(index_and_split(root, 0), DataError);
  fs::remove_all(root);
  CHECK_THROWS_AS(generate_synthetic(root, {1, 30, 8, 0}), ConfigError);
  CHECK_THROWS_AS(generate_synthetic(root, {4, 10, 8, 0}), ConfigError);
}

TEST_CASE("synthetic classes are separable by mean colour") {
  const std::size_t k = 4, n = 100;
  std::vector<std::array<double, 3>> feats;
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const Image img = synthetic_image(c, k, 16, 11, i);
      std::array<double, 3> m{};
      for (std::size_t p = 0; p < 256; ++p)
        for (std::size_t ch = 0; ch < 3; ++ch) m[ch] += img.rgb[p * 3 + ch] / 256.0;
      feats.push_back(m);
      labels.push_back(c);
    }
  // centroids from even images, evaluate on odd ones
  std::vector<std::array<double, 3>> centroid(k, {0, 0, 0});
  for (std::size_t i = 0; i < feats.size(); i += 2)
    for (std::size_t ch = 0; ch < 3; ++ch) centroid[labels[i]][ch] += feats[i][ch] / (n / 2);
  std::size_t correct = 0, total = 0;
  for (std::size_t i = 1; i < feats.size(); i += 2, ++total) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double d = 0;
      for (std::size_t ch = 0; ch < 3; ++ch) d += (feats[i][ch] - centroid[c][ch]) * (feats[i][ch] - centroid[c][ch]);
      if (d < bd) bd = d, best = c;
    }
    correct += best == labels[i];
  }
  CHECK(double(correct) / total >= 0.95);
}
