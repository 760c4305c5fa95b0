#include "swinq/quant/quantize.hpp"

#include <algorithm>

#include "swinq/errors.hpp"

namespace swinq {

Tensor quantize(const Tensor& x, const QuantParams& qp) {
  qp.validate();
  const auto v = x.f32();
  if (qp.scheme == QuantScheme::affine) {
    std::vector<std::uint8_t> q(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q[i] = static_cast<std::uint8_t>(quantize_value(v[i], qp));
    return Tensor::from_u8(x.shape(), std::move(q), qp);
  }
  if (qp.scheme == QuantScheme::symmetric) {
    std::vector<std::int8_t> q(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q[i] = static_cast<std::int8_t>(quantize_value(v[i], qp));
    return Tensor::from_i8(x.shape(), std::move(q), qp);
  }
  if (qp.scheme == QuantScheme::pot_channel) {
    const std::size_t c = qp.exponents.size();
    if (x.shape().back() != c) throw DimensionError("channel factors do not match the last axis");
    std::vector<std::int8_t> q(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q[i] = static_cast<std::int8_t>(quantize_ptf_value(v[i], qp, i % c));
    return Tensor::from_i8(x.shape(), std::move(q), qp);
  }
  return log2_quantize(x, qp.bits);
}

Tensor dequantize(const Tensor& q) {
  if (!q.qparams()) throw DomainError("dequantize needs a tensor with quantization params");
  return Tensor::from_f32(q.shape(), q.to_f32());
}

std::uint8_t log2_level(float x, int bits) {
  if (!(x >= 0.0f && x <= 1.0f + 1e-6f)) throw DomainError("log2 quantizer input outside [0, 1]: " + std::to_string(x));
  const int top = (1 << bits) - 1;
  if (x == 0.0f) return static_cast<std::uint8_t>(top);
  const float level = std::nearbyint(-std::log2(x));
  return static_cast<std::uint8_t>(std::clamp(level, 0.0f, static_cast<float>(top)));
}

Tensor log2_quantize(const Tensor& probs, int bits) {
  const auto v = probs.f32();
  std::vector<std::uint8_t> q(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) q[i] = log2_level(v[i], bits);
  QuantParams qp;
  qp.scheme = QuantScheme::log2;
  qp.bits = bits;
  return Tensor::from_u8(probs.shape(), std::move(q), qp);
}

Tensor log2_dequantize(const Tensor& levels) {
  if (!levels.qparams() || levels.qparams()->scheme != QuantScheme::log2)
    throw DomainError("log2_dequantize needs log2 levels");
  return dequantize(levels);
}

QuantParams ptf_layernorm_params(std::span<const float> ranges, int bits, int max_exponent) {
  if (ranges.empty()) throw DomainError("ptf needs at least one channel");
  float widest = 0.0f;
  for (float r : ranges) {
    if (!(r >= 0.0f) || !std::isfinite(r)) throw DomainError("channel ranges must be finite and non-negative");
    widest = std::max(widest, r);
  }
  QuantParams qp;
  qp.scheme = QuantScheme::pot_channel;
  qp.bits = bits;
  qp.scale = widest > 0.0f ? widest / static_cast<float>((1 << (bits - 1)) - 1) : 1.0f;
  qp.exponents.resize(ranges.size());
  for (std::size_t c = 0; c < ranges.size(); ++c) {
    int a = max_exponent;
    if (ranges[c] > 0.0f && widest > 0.0f)
      a = std::clamp(static_cast<int>(std::nearbyint(std::log2(widest / ranges[c]))), 0, max_exponent);
    else if (widest == 0.0f)
      a = 0;
    qp.exponents[c] = static_cast<std::uint8_t>(a);
  }
  return qp;
}

std::int32_t quantize_ptf_value(float x, const QuantParams& qp, std::size_t channel) {
  const float s = qp.scale / static_cast<float>(1u << qp.exponents[channel]);
  const float r = std::nearbyint(x / s);
  return static_cast<std::int32_t>(std::clamp(r, static_cast<float>(qp.qmin()), static_cast<float>(qp.qmax())));
}

float dequantize_ptf_value(std::int32_t q, const QuantParams& qp, std::size_t channel) {
  return static_cast<float>(q) * (qp.scale / static_cast<float>(1u << qp.exponents[channel]));
}

ChannelQuantized quantize_weight_per_channel(std::span<const float> w, std::size_t out, std::size_t in, int bits) {
  if (w.size() != out * in) throw DimensionError("weight size does not match [out, in]");
  const float qmax = static_cast<float>((1 << (bits - 1)) - 1);
  ChannelQuantized r;
  r.levels.resize(w.size());
  r.scales.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    float m = 0.0f;
    for (std::size_t i = 0; i < in; ++i) m = std::max(m, std::abs(w[o * in + i]));
    const float s = m > 0.0f ? m / qmax : 1.0f;
    r.scales[o] = s;
    for (std::size_t i = 0; i < in; ++i)
      r.levels[o * in + i] = static_cast<std::int8_t>(std::clamp(std::nearbyint(w[o * in + i] / s), -qmax, qmax));
  }
  return r;
}

}  // namespace swinq
