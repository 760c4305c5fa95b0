#pragma once

#include <cstdint>

namespace swinq {

// IEEE 754 binary16 conversion, round-to-nearest-even. Arithmetic stays in
// f32; these only model storage.
std::uint16_t float_to_half_bits(float value) noexcept;
float half_bits_to_float(std::uint16_t bits) noexcept;

inline float round_to_half(float value) noexcept {
  return half_bits_to_float(float_to_half_bits(value));
}

}  // namespace swinq
