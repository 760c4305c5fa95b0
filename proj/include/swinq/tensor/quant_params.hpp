#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace swinq {

enum class QuantScheme : std::uint8_t {
  affine = 0,
  symmetric = 1,
  log2 = 2,
  pot_channel = 3,
};

std::string_view to_string(QuantScheme scheme);
QuantScheme quant_scheme_from_string(std::string_view name);

/// Scale / zero-point description of one quantized tensor or activation site.
///
/// Levels are `clamp(round(x / scale) + zero_point, qmin, qmax)`. For
/// `pot_channel`, channel c uses `scale / 2^exponents[c]` and a zero point of 0.
/// `log2` levels encode `2^-q` and carry scale 1 / zero point 0.
struct QuantParams {
  QuantScheme scheme = QuantScheme::affine;
  int bits = 8;
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  std::vector<std::uint8_t> exponents;

  std::int32_t qmin() const noexcept;
  std::int32_t qmax() const noexcept;

  /// Throws DomainError when the invariants of the scheme do not hold.
  void validate() const;

  bool operator==(const QuantParams&) const = default;
};

}  // namespace swinq
