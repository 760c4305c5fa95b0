#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "swinq/tensor/quant_params.hpp"
#include "swinq/tensor/tensor.hpp"

namespace swinq {

/// clamp(round_half_even(x / scale) + zero_point, qmin, qmax).
inline std::int32_t quantize_value(float x, const QuantParams& qp) {
  const float r = std::nearbyint(x / qp.scale);
  const float lo = static_cast<float>(qp.qmin() - qp.zero_point);
  const float hi = static_cast<float>(qp.qmax() - qp.zero_point);
  return static_cast<std::int32_t>(std::clamp(r, lo, hi)) + qp.zero_point;
}

inline float dequantize_value(std::int32_t q, const QuantParams& qp) {
  return static_cast<float>(q - qp.zero_point) * qp.scale;
}

/// Affine params become u8, symmetric i8. Other schemes have dedicated entry points.
Tensor quantize(const Tensor& x, const QuantParams& qp);
Tensor dequantize(const Tensor& q);

/// Level of a probability under 4-bit-style log2 quantization:
/// clamp(round(-log2 x), 0, 2^bits - 1), with 0 mapping to the last level.
/// Throws DomainError outside [0, 1 + 1e-6].
std::uint8_t log2_level(float x, int bits);
inline float log2_value(std::uint8_t level) { return std::ldexp(1.0f, -static_cast<int>(level)); }

Tensor log2_quantize(const Tensor& probs, int bits = 4);
Tensor log2_dequantize(const Tensor& levels);

/// Power-of-two channel factors for layer-norm inputs. `ranges[c]` is the
/// largest magnitude seen in channel c; the shared scale covers the widest
/// channel and channel c uses scale / 2^exponents[c].
QuantParams ptf_layernorm_params(std::span<const float> ranges, int bits = 8, int max_exponent = 3);

/// Symmetric levels for per-channel (last axis) power-of-two params.
std::int32_t quantize_ptf_value(float x, const QuantParams& qp, std::size_t channel);
float dequantize_ptf_value(std::int32_t q, const QuantParams& qp, std::size_t channel);

/// Symmetric, narrow-range, per-output-channel weight quantization of an
/// [out, in] matrix. All-zero rows get scale 1.
struct ChannelQuantized {
  std::vector<std::int8_t> levels;
  std::vector<float> scales;
};
ChannelQuantized quantize_weight_per_channel(std::span<const float> w, std::size_t out, std::size_t in,
                                             int bits = 8);

/// Maps an i32 accumulator back to an output level:
/// clamp(round_half_even(acc * multiplier + offset) + zero_point).
/// `multiplier` is s_in * s_w / s_out and `offset` is bias / s_out.
inline std::int32_t requantize(std::int64_t acc, float multiplier, float offset, const QuantParams& out) {
  const float v = static_cast<float>(acc) * multiplier + offset;
  const float r = std::nearbyint(v);
  const float lo = static_cast<float>(out.qmin() - out.zero_point);
  const float hi = static_cast<float>(out.qmax() - out.zero_point);
  return static_cast<std::int32_t>(std::clamp(r, lo, hi)) + out.zero_point;
}

}  // namespace swinq
