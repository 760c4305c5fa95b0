#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "swinq/errors.hpp"
#include "swinq/quant/calibration.hpp"
#include "swinq/quant/quantize.hpp"

using namespace swinq;

namespace {

CalibrationStats stats_of(std::initializer_list<std::vector<float>> batches, float alpha = kDefaultEmaAlpha) {
  CalibrationStats s;
  s.site = "x";
  for (const auto& b : batches) observe(s, b, alpha);
  return s;
}

}  // namespace

TEST_CASE("quantize and dequantize") {
  QuantParams sym;
  sym.scheme = QuantScheme::symmetric;
  sym.scale = 0.1f;
  SUBCASE("zero maps to the zero point") {
    QuantParams a;
    a.scale = 0.05f;
    a.zero_point = 77;
    CHECK(quantize_value(0.0f, a) == 77);
    CHECK(dequantize_value(77, a) == 0.0f);
  }
  SUBCASE("half-even rounding") {
    CHECK(quantize_value(0.25f, sym) == 2);
    CHECK(dequantize_value(2, sym) == doctest::Approx(0.2f));
    QuantParams unit = sym;
    unit.scale = 1.0f;
    CHECK(quantize_value(2.5f, unit) == 2);
    CHECK(quantize_value(3.5f, unit) == 4);
    CHECK(quantize_value(-2.5f, unit) == -2);
  }
  SUBCASE("clamping") {
    CHECK(quantize_value(1000.0f, sym) == 127);
    CHECK(quantize_value(-1000.0f, sym) == -127);
    QuantParams a;
    a.scale = 1.0f;
    a.zero_point = 10;
    CHECK(quantize_value(-50.0f, a) == 0);
  }
  SUBCASE("tensor round trip") {
    QuantParams a;
    a.scale = 0.02f;
    a.zero_point = 100;
    const Tensor x = Tensor::from_f32({2, 3}, {-1.0f, -0.5f, 0.0f, 0.3f, 1.0f, 2.0f});
    const Tensor q = quantize(x, a);
    CHECK(q.dtype() == DType::u8);
    const Tensor d = dequantize(q);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(d.f32()[i] - x.f32()[i]) <= a.scale / 2 + 1e-6f);
    CHECK(quantize(x, sym).dtype() == DType::i8);
  }
  SUBCASE("random in-range values stay within half a step") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> sd(1e-3f, 1.0f);
    for (int t = 0; t < 200; ++t) {
      QuantParams qp;
      qp.scale = sd(rng);
      qp.zero_point = static_cast<std::int32_t>(rng() % 256);
      const float lo = dequantize_value(0, qp), hi = dequantize_value(255, qp);
      std::uniform_real_distribution<float> xd(lo, hi);
      for (int i = 0; i < 100; ++i) {
        const float x = xd(rng);
        const float r = dequantize_value(quantize_value(x, qp), qp);
        const float ulp = std::nextafter(std::abs(x), INFINITY) - std::abs(x);
        CHECK(std::abs(r - x) <= qp.scale / 2 + ulp);
      }
    }
  }
  SUBCASE("monotone") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> d(-3, 3);
    std::vector<float> v(2000);
    for (float& x : v) x = d(rng);
    std::sort(v.begin(), v.end());
    QuantParams a = params_for_range(-2, 2.5, 8, QuantScheme::affine);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(quantize_value(v[i - 1], a) <= quantize_value(v[i], a));
  }
}

TEST_CASE("log2 quantizer") {
  CHECK(log2_level(1.0f, 4) == 0);
  CHECK(log2_level(0.5f, 4) == 1);
  CHECK(log2_level(0.3f, 4) == 2);
  CHECK(log2_value(2) == 0.25f);
  CHECK(log2_level(0.0f, 4) == 15);
  CHECK(log2_level(1e-9f, 4) == 15);
  CHECK_THROWS_AS(log2_level(1.01f, 4), DomainError);
  CHECK_THROWS_AS(log2_level(-0.1f, 4), DomainError);
  const Tensor p = Tensor::from_f32({4}, {1.0f, 0.5f, 0.3f, 0.0f});
  const Tensor d = log2_dequantize(log2_quantize(p));
  CHECK(std::vector<float>(d.f32().begin(), d.f32().end()) == std::vector<float>{1.0f, 0.5f, 0.25f, 1.0f / 32768});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const float a = u(rng), b = u(rng);
    const float qa = log2_value(log2_level(a, 4)), qb = log2_value(log2_level(b, 4));
    CHECK(qa >= std::ldexp(1.0f, -15));
    CHECK(qa <= 1.0f);
    if (a <= b) CHECK(qa <= qb);
  }
}

TEST_CASE("power-of-two channel factors") {
  const std::vector<float> equal{2, 2, 2};
  auto qp = ptf_layernorm_params(equal);
  CHECK(qp.exponents == std::vector<std::uint8_t>{0, 0, 0});
  CHECK(qp.scale == doctest::Approx(2.0f / 127));
  const std::vector<float> r{1, 4};
  CHECK(ptf_layernorm_params(r).exponents == std::vector<std::uint8_t>{2, 0});
  const std::vector<float> z{0, 4, 0.01f};
  CHECK(ptf_layernorm_params(z).exponents == std::vector<std::uint8_t>{3, 0, 3});
  qp = ptf_layernorm_params(r);
  CHECK(dequantize_ptf_value(quantize_ptf_value(0.5f, qp, 0), qp, 0) == doctest::Approx(0.5f).epsilon(0.01));
  const Tensor t = quantize(Tensor::from_f32({2, 2}, {0.5f, 3.0f, -1.0f, -4.0f}), qp);
  const auto back = t.to_f32();
  CHECK(back[0] == doctest::Approx(0.5f).epsilon(0.01));
  CHECK(back[3] == doctest::Approx(-4.0f).epsilon(0.01));
}

TEST_CASE("weight quantization per channel") {
  const std::vector<float> w{0.5f, -1.0f, 0.25f, 0.0f, 0.0f, 0.0f, 2.0f, 1.0f, -0.3f};
  const auto q = quantize_weight_per_channel(w, 3, 3);
  CHECK(q.scales[0] == doctest::Approx(1.0f / 127));
  CHECK(q.scales[1] == 1.0f);
  CHECK(q.levels[1] == -127);
  CHECK(q.levels[6] == 127);
  for (std::size_t i = 0; i < 9; ++i)
    CHECK(std::abs(q.levels[i] * q.scales[i / 3] - w[i]) <= q.scales[i / 3] / 2 + 1e-7f);
}

TEST_CASE("requantize") {
  QuantParams out;
  out.scale = 0.5f;
  out.zero_point = 10;
  CHECK(requantize(5, 0.5f, 0.0f, out) == 12);  // 2.5 -> 2
  CHECK(requantize(7, 0.5f, 0.0f, out) == 14);  // 3.5 -> 4
  CHECK(requantize(-1000, 1.0f, 0.0f, out) == 0);
  CHECK(requantize(1000, 1.0f, 0.0f, out) == 255);
}

TEST_CASE("observe") {
  SUBCASE("single batch") {
    const auto s = stats_of({{-1.0f, 0.5f, 2.0f}});
    CHECK(s.ema_min == s.min);
    CHECK(s.ema_max == s.max);
    CHECK(s.count == 3);
  }
  SUBCASE("constant stream") {
    for (float alpha : {0.0f, 0.5f, 0.9f}) {
      const std::vector<float> b{-0.7f, 0.1f, 3.3f};
      const auto s = stats_of({b, b, b, b}, alpha);
      CHECK(calibrate_ema(s, 8, QuantScheme::affine) == calibrate_minmax(s, 8, QuantScheme::affine));
    }
  }
  SUBCASE("recurrence") {
    const auto s = stats_of({{0.0f, 1.0f}, {0.0f, 2.0f}}, 0.9f);
    CHECK(s.ema_max == doctest::Approx(1.1f));
    CHECK(s.max == 2.0f);
  }
  SUBCASE("histogram totals survive rebinning") {
    std::mt19937_64 rng(6);
    CalibrationStats s;
    for (int b = 1; b <= 10; ++b) {
      std::uniform_real_distribution<float> d(-float(b), float(b) * 2);
      std::vector<float> v(100);
      for (float& x : v) x = d(rng);
      observe(s, v);
    }
    std::uint64_t total = 0;
    for (auto c : s.hist) total += c;
    CHECK(total == s.count);
    CHECK(s.min <= s.max);
  }
  SUBCASE("non-finite input") {
    CalibrationStats s;
    const std::vector<float> bad{1.0f, NAN};
    CHECK_THROWS_AS(observe(s, bad), CalibrationError);
  }
  SUBCASE("merge") {
    const std::vector<float> a{-1, 0, 1}, b{2, 3, -4};
    const auto sa = stats_of({a}), sb = stats_of({b}), both = stats_of({a, b});
    const auto m = merge(sa, sb);
    CHECK(m.min == both.min);
    CHECK(m.max == both.max);
    CHECK(m.count == both.count);
    CHECK(calibrate_minmax(m, 8, QuantScheme::affine) == calibrate_minmax(both, 8, QuantScheme::affine));
  }
}

TEST_CASE("minmax") {
  CHECK(calibrate_minmax(stats_of({{-1.0f, 0.2f, 1.0f}}), 8, QuantScheme::symmetric).scale ==
        doctest::Approx(1.0f / 127));
  const auto a = calibrate_minmax(stats_of({{0.0f, 6.0f, 3.0f}}), 8, QuantScheme::affine);
  CHECK(a.scale == doctest::Approx(6.0f / 255));
  CHECK(a.zero_point == 0);
  const auto z = calibrate_minmax(stats_of({{0.0f, 0.0f}}), 8, QuantScheme::affine);
  CHECK(z.scale == 1.0f);
  CHECK(z.zero_point == 0);
  const auto neg = calibrate_minmax(stats_of({{-3.0f, -1.0f}}), 8, QuantScheme::affine);
  CHECK(neg.zero_point == 255);
  CHECK_THROWS_AS(calibrate_minmax(CalibrationStats{}, 8, QuantScheme::affine), CalibrationError);
}

TEST_CASE("percentile") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(0, 1);
  std::vector<float> v(1000);
  for (float& x : v) x = u(rng);
  CalibrationStats s;
  observe(s, v);
  CHECK(calibrate_percentile(s, 8, QuantScheme::affine, 100.0) == calibrate_minmax(s, 8, QuantScheme::affine));
  std::vector<float> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const float width = (s.hist_hi - s.hist_lo) / kHistogramBins;
  const float clip = histogram_quantile(s, 0.99, true);
  CHECK(std::abs(clip - sorted[989]) <= width + 1e-6f);
  const auto qp = calibrate_percentile(s, 8, QuantScheme::affine, 99.0);
  CHECK(qp.scale * 255 == doctest::Approx(clip - std::min(0.0f, histogram_quantile(s, 0.01, false))).epsilon(1e-4));

  std::vector<float> outlier(999);
  for (float& x : outlier) x = u(rng);
  outlier.push_back(100.0f);
  CalibrationStats o;
  observe(o, outlier);
  const auto po = calibrate_percentile(o, 8, QuantScheme::affine, 99.9);
  CHECK(po.scale * 255 <= 1.0f + (100.0f / kHistogramBins) + 1e-4f);
  CHECK_THROWS_AS(calibrate_percentile(o, 8, QuantScheme::affine, 0.0), DomainError);
  CHECK_THROWS_AS(calibrate_percentile(o, 8, QuantScheme::affine, 100.5), DomainError);
}

TEST_CASE("omse") {
  std::mt19937_64 rng(8);
  SUBCASE("never worse than minmax") {
    for (int t = 0; t < 20; ++t) {
      std::normal_distribution<float> n(0.0f, 1.0f + t);
      std::vector<float> v(500);
      for (float& x : v) x = n(rng);
      CalibrationStats s;
      observe(s, v);
      for (auto scheme : {QuantScheme::affine, QuantScheme::symmetric}) {
        const auto mm = calibrate_minmax(s, 8, scheme);
        const auto om = calibrate_omse(s, v, 8, scheme);
        CHECK(quantization_mse(v, om) <= quantization_mse(v, mm));
      }
    }
  }
  SUBCASE("two points reconstruct exactly") {
    const std::vector<float> v{-0.5f, 0.5f};
    CalibrationStats s;
    observe(s, v);
    const auto qp = calibrate_omse(s, v, 8, QuantScheme::symmetric);
    CHECK(quantization_mse(v, qp) == 0.0);
  }
  SUBCASE("heavy tail shrinks the scale") {
    std::cauchy_distribution<float> c(0.0f, 0.05f);
    std::vector<float> v(4000);
    for (float& x : v) x = std::clamp(c(rng), -50.0f, 50.0f);
    CalibrationStats s;
    observe(s, v);
    CHECK(calibrate_omse(s, v, 8, QuantScheme::symmetric).scale <
          calibrate_minmax(s, 8, QuantScheme::symmetric).scale);
  }
  SUBCASE("empty sample") {
    CalibrationStats s;
    observe(s, std::vector<float>{1.0f, 2.0f});
    CHECK_THROWS_AS(calibrate_omse(s, {}, 8, QuantScheme::affine), CalibrationError);
  }
}

TEST_CASE("calibration table json") {
  CalibrationTable t;
  t.method = "fqvit";
  t.sample_count = 32;
  t.sites["a.in"] = params_for_range(-1.3f, 2.7f, 8, QuantScheme::affine);
  const std::vector<float> r{1, 4, 0};
  t.sites["n.in"] = ptf_layernorm_params(r);
  QuantParams l;
  l.scheme = QuantScheme::log2;
  l.bits = 4;
  t.sites["p"] = l;
  t.warnings.push_back("site 'z' is constant");
  const nlohmann::json j = t;
  CHECK(nlohmann::json::parse(j.dump()).get<CalibrationTable>() == t);
  CHECK(calibration_method_from_string("omse") == CalibrationMethod::omse);
  CHECK_THROWS_AS(calibration_method_from_string("entropy"), ConfigError);
}
