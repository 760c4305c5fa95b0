#include <random>

#include "doctest.h"
#include "swinq/errors.hpp"
#include "swinq/tensor/archive.hpp"

using namespace swinq;

namespace {

Tensor random_any_tensor(std::mt19937& rng) {
  std::uniform_int_distribution<int> ndim_dist(1, 3), extent(1, 5), kind(0, 4);
  Shape shape(static_cast<std::size_t>(ndim_dist(rng)));
  for (auto& d : shape) d = static_cast<std::size_t>(extent(rng));
  const std::size_t n = shape_numel(shape);
  QuantParams qp;
  qp.scale = std::uniform_real_distribution<float>(0.01f, 2.0f)(rng);
  switch (kind(rng)) {
    case 0: {
      std::vector<float> v(n);
      for (float& x : v) x = std::normal_distribution<float>(0, 3)(rng);
      return Tensor::from_f32(shape, v);
    }
    case 1: {
      std::vector<float> v(n);
      for (float& x : v) x = std::normal_distribution<float>(0, 3)(rng);
      return Tensor::from_f32_as_f16(shape, v);
    }
    case 2: {
      qp.scheme = QuantScheme::symmetric;
      std::vector<std::int8_t> v(n);
      for (auto& x : v) x = static_cast<std::int8_t>(std::uniform_int_distribution<int>(-127, 127)(rng));
      return Tensor::from_i8(shape, v, qp);
    }
    case 3: {
      qp.zero_point = std::uniform_int_distribution<int>(0, 255)(rng);
      std::vector<std::uint8_t> v(n);
      for (auto& x : v) x = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(rng));
      return Tensor::from_u8(shape, v, qp);
    }
    default: {
      std::vector<std::int32_t> v(n);
      for (auto& x : v) x = std::uniform_int_distribution<std::int32_t>()(rng);
      return Tensor::from_i32(shape, v);
    }
  }
}

}  // namespace

TEST_CASE("empty archive is header only") {
  const auto bytes = archive_write(TensorArchive{});
  CHECK(bytes == std::vector<std::uint8_t>{0x53, 0x57, 0x54, 0x41, 1, 0, 0, 0, 0, 0, 0, 0});
  CHECK(archive_read(bytes).size() == 0);
}

TEST_CASE("one f32 [2,2] tensor layout") {
  TensorArchive a;
  a.add("w", Tensor::from_f32({2, 2}, {1.0f, -2.0f, 0.5f, 0.0f}));
  const auto bytes = archive_write(a);
  // header 12 + name_len 2 + name 1 + dtype 1 + ndim 1 + dims 8 + has_qp 1 + payload 16
  CHECK(bytes.size() == 12 + 2 + 1 + 1 + 1 + 8 + 1 + 16);
  const std::size_t payload = bytes.size() - 16;
  CHECK(bytes[payload + 0] == 0x00);
  CHECK(bytes[payload + 3] == 0x3f);  // 1.0f = 0x3f800000 little-endian
  CHECK(bytes[payload + 2] == 0x80);
  CHECK(bytes[payload + 7] == 0xc0);  // -2.0f = 0xc0000000
}

TEST_CASE("random archives round-trip byte-identically") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TensorArchive a;
    for (int i = 0; i < 10; ++i) a.add("t" + std::to_string(i) + "." + std::to_string(trial), random_any_tensor(rng));
    const auto bytes = archive_write(a);
    const TensorArchive b = archive_read(bytes);
    CHECK(b == a);
    CHECK(archive_write(b) == bytes);
  }
}

TEST_CASE("qparams survive the round trip") {
  QuantParams qp;
  qp.scheme = QuantScheme::log2;
  qp.bits = 4;
  TensorArchive a;
  a.add("attn", Tensor::from_u8({2}, {0, 15}, qp));
  a.add("f", Tensor::from_storage({1}, std::vector<float>{2.0f}, QuantParams{}));
  const TensorArchive b = archive_read(archive_write(a));
  CHECK(b.at("attn").qparams() == qp);
  CHECK(b.at("f").qparams().has_value());
}

TEST_CASE("format errors carry offsets") {
  TensorArchive a;
  a.add("x", Tensor::from_f32({3}, {1, 2, 3}));
  auto bytes = archive_write(a);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    try {
      archive_read(bad);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("truncated payload") {
    auto cut = bytes;
    cut.resize(cut.size() - 5);
    try {
      archive_read(cut);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == bytes.size() - 12);
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SUBCASE("duplicate names") {
    CHECK_THROWS_AS(a.add("x", Tensor::zeros({1})), FormatError);
    // Hand-craft a file with the same entry twice.
    std::vector<std::uint8_t> dup(bytes.begin(), bytes.end());
    dup[8] = 2;
    dup.insert(dup.end(), bytes.begin() + 12, bytes.end());
    try {
      archive_read(dup);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == bytes.size());
    }
  }
  SUBCASE("i8 without qparams") {
    auto bad = bytes;
    bad[12 + 2 + 1] = static_cast<std::uint8_t>(DType::i8);
    CHECK_THROWS_AS(archive_read(bad), FormatError);
  }
  SUBCASE("trailing bytes") {
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(archive_read(extra), FormatError);
  }
}
