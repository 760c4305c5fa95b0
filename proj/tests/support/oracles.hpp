#pragma once

// Slow, independent reference computations for tests. Nothing here calls the
// library's kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "swinq/tensor/tensor.hpp"

namespace oracle {

inline swinq::Tensor random_tensor(swinq::Shape shape, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(swinq::shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return swinq::Tensor::from_f32(std::move(shape), std::move(v));
}

/// y[r][o] = sum_i x[r][i] * w[o][i] + b[o], in double.
inline std::vector<double> linear(const std::vector<double>& x, std::size_t rows, std::size_t in,
                                  const std::vector<float>& w, const std::vector<float>& b, std::size_t out) {
  std::vector<double> y(rows * out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b.empty() ? 0.0 : b[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * double(w[o * in + i]);
      y[r * out + o] = acc;
    }
  return y;
}

/// Global multi-head self-attention over all n tokens of x [n, c] with
/// explicit per-head Q, K, V matrices, then the output projection.
inline std::vector<double> dense_attention(const std::vector<float>& x, std::size_t n, std::size_t c,
                                           std::size_t heads, const std::vector<float>& qkv_w,
                                           const std::vector<float>& qkv_b, const std::vector<float>& proj_w,
                                           const std::vector<float>& proj_b) {
  const std::vector<double> xd(x.begin(), x.end());
  const auto qkv = linear(xd, n, c, qkv_w, qkv_b, 3 * c);
  const std::size_t d = c / heads;
  std::vector<double> ctx(n * c, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (std::size_t e = 0; e < d; ++e) dot += qkv[i * 3 * c + h * d + e] * qkv[j * 3 * c + c + h * d + e];
        s[j] = dot / std::sqrt(double(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (double& v : s) z += (v = std::exp(v - mx));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t e = 0; e < d; ++e) ctx[i * c + h * d + e] += s[j] / z * qkv[j * 3 * c + 2 * c + h * d + e];
    }
  }
  return linear(ctx, n, c, proj_w, proj_b, c);
}

/// Region label of a rolled-grid coordinate: 0 untouched, 1 last full window
/// strip, 2 wrapped strip of width `shift`.
inline int region(std::size_t pos, std::size_t extent, std::size_t window, std::size_t shift) {
  if (pos < extent - window) return 0;
  return pos < extent - shift ? 1 : 2;
}

/// Number of blocked ordered pairs in window (wr, wc) of the rolled grid.
inline std::size_t blocked_pairs(std::size_t h, std::size_t w, std::size_t window, std::size_t shift, std::size_t wr,
                                 std::size_t wc) {
  std::size_t count = 0;
  for (std::size_t a = 0; a < window * window; ++a)
    for (std::size_t b = 0; b < window * window; ++b) {
      const std::size_t ia = wr * window + a / window, ja = wc * window + a % window;
      const std::size_t ib = wr * window + b / window, jb = wc * window + b % window;
      if (region(ia, h, window, shift) != region(ib, h, window, shift) ||
          region(ja, w, window, shift) != region(jb, w, window, shift))
        ++count;
    }
  return count;
}

inline double max_abs_diff(const std::vector<double>& a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - double(b[i])));
  return m;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

}  // namespace oracle
