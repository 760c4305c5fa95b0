#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace swinq {

enum class DType : std::uint8_t { f32 = 0, f16 = 1, i8 = 2, u8 = 3, i32 = 4 };

constexpr std::size_t dtype_size(DType t) noexcept {
  switch (t) {
    case DType::f32:
    case DType::i32:
      return 4;
    case DType::f16:
      return 2;
    case DType::i8:
    case DType::u8:
      return 1;
  }
  return 0;
}

std::string_view to_string(DType t);

}  // namespace swinq
