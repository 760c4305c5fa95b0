#pragma once

// Scalar-generic dense kernels over row-major spans. Every model path
// (inference, training, calibration, fake quantization) funnels through
// these, so a given scalar type always sees the same accumulation order.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>

namespace swinq::kernels {

/// c[m,n] = a[m,k] * b[k,n]. Accumulates in T along k in ascending order.
template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
  std::fill(c.begin(), c.end(), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data() + i * n;
    const T* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// y[rows,out] = x[rows,in] * wt[in,out] + bias[out]. `wt` is the transposed
/// weight; bias may be empty. The bias is added after the full product.
template <class T>
void linear_t(std::span<const T> x, std::size_t rows, std::size_t in, std::span<const T> wt,
              std::span<const T> bias, std::size_t out, std::span<T> y) {
  matmul<T>(x, wt, y, rows, in, out);
  if (bias.empty()) return;
  for (std::size_t r = 0; r < rows; ++r) {
    T* yrow = y.data() + r * out;
    for (std::size_t o = 0; o < out; ++o) yrow[o] += bias[o];
  }
}

template <class T>
void transpose(std::span<const T> src, std::size_t rows, std::size_t cols, std::span<T> dst) {
  assert(src.size() == rows * cols && dst.size() == rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

/// In-place softmax over contiguous rows of length n, max-subtracted.
/// NaN inputs propagate to NaN outputs.
template <class T>
void softmax_rows(std::span<T> x, std::size_t n) {
  assert(n > 0 && x.size() % n == 0);
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    T* row = x.data() + r * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    if (std::isnan(mx)) mx = T(0);
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
}

/// Per-row layer normalization with population variance.
template <class T>
void layernorm_rows(std::span<const T> x, std::size_t c, std::span<const T> gamma,
                    std::span<const T> beta, T eps, std::span<T> y) {
  assert(c > 0 && x.size() % c == 0 && y.size() == x.size());
  for (std::size_t r = 0; r < x.size() / c; ++r) {
    const T* xr = x.data() + r * c;
    T* yr = y.data() + r * c;
    T mean = T(0);
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<T>(c);
    T var = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      const T d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T rstd = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) yr[j] = (xr[j] - mean) * rstd * gamma[j] + beta[j];
  }
}

/// Exact GELU: x * Phi(x).
template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2.0)));
}

/// d gelu / dx = Phi(x) + x * phi(x).
template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2.0)));
  const T pdf = std::exp(T(-0.5) * x * x) * static_cast<T>(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <class T>
void gelu_inplace(std::span<T> x) {
  for (T& v : x) v = gelu(v);
}

}  // namespace swinq::kernels
