#include "swinq/tensor/quant_params.hpp"

#include <cmath>
#include <string>

#include "swinq/errors.hpp"

namespace swinq {

std::string_view to_string(QuantScheme scheme) {
  switch (scheme) {
    case QuantScheme::affine:
      return "affine";
    case QuantScheme::symmetric:
      return "symmetric";
    case QuantScheme::log2:
      return "log2";
    case QuantScheme::pot_channel:
      return "pot_channel";
  }
  return "unknown";
}

QuantScheme quant_scheme_from_string(std::string_view name) {
  if (name == "affine") return QuantScheme::affine;
  if (name == "symmetric") return QuantScheme::symmetric;
  if (name == "log2") return QuantScheme::log2;
  if (name == "pot_channel") return QuantScheme::pot_channel;
  throw DomainError("unknown quantization scheme '" + std::string(name) + "'");
}

std::int32_t QuantParams::qmin() const noexcept {
  switch (scheme) {
    case QuantScheme::symmetric:
    case QuantScheme::pot_channel:
      return -((1 << (bits - 1)) - 1);
    default:
      return 0;
  }
}

std::int32_t QuantParams::qmax() const noexcept {
  switch (scheme) {
    case QuantScheme::symmetric:
    case QuantScheme::pot_channel:
      return (1 << (bits - 1)) - 1;
    default:
      return (1 << bits) - 1;
  }
}

void QuantParams::validate() const {
  if (bits != 4 && bits != 8) throw DomainError("quantization bits must be 4 or 8");
  if (!(scale > 0.0f) || !std::isfinite(scale)) throw DomainError("quantization scale must be finite and > 0");
  if (zero_point < qmin() || zero_point > qmax()) throw DomainError("zero point outside the level range");
  switch (scheme) {
    case QuantScheme::affine:
      break;
    case QuantScheme::symmetric:
    case QuantScheme::pot_channel:
      if (zero_point != 0) throw DomainError("symmetric quantization requires zero_point == 0");
      break;
    case QuantScheme::log2:
      if (scale != 1.0f || zero_point != 0) throw DomainError("log2 quantization requires scale 1, zero_point 0");
      break;
  }
  if (scheme != QuantScheme::pot_channel && !exponents.empty())
    throw DomainError("per-channel exponents are only valid for pot_channel");
}

}  // namespace swinq
