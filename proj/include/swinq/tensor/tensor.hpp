#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "swinq/tensor/dtype.hpp"
#include "swinq/tensor/quant_params.hpp"

namespace swinq {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major n-d array. f16 elements are held as raw binary16 bits;
/// i8/u8 tensors always carry QuantParams.
class Tensor {
 public:
  using Storage = std::variant<std::vector<float>, std::vector<std::uint16_t>,
                               std::vector<std::int8_t>, std::vector<std::uint8_t>,
                               std::vector<std::int32_t>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32,
                      std::optional<QuantParams> qparams = std::nullopt);
  static Tensor from_f32(Shape shape, std::vector<float> values);
  /// Rounds every value to the nearest binary16.
  static Tensor from_f32_as_f16(Shape shape, std::span<const float> values);
  static Tensor from_f16_bits(Shape shape, std::vector<std::uint16_t> bits);
  static Tensor from_i8(Shape shape, std::vector<std::int8_t> values, QuantParams qparams);
  static Tensor from_u8(Shape shape, std::vector<std::uint8_t> values, QuantParams qparams);
  static Tensor from_i32(Shape shape, std::vector<std::int32_t> values,
                         std::optional<QuantParams> qparams = std::nullopt);
  static Tensor from_storage(Shape shape, Storage storage, std::optional<QuantParams> qparams);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept;
  DType dtype() const noexcept { return static_cast<DType>(storage_.index()); }
  const std::optional<QuantParams>& qparams() const noexcept { return qparams_; }

  /// Typed element access; throws std::logic_error on dtype mismatch.
  std::span<float> f32();
  std::span<const float> f32() const;
  std::span<const std::uint16_t> f16_bits() const;
  std::span<const std::int8_t> i8() const;
  std::span<const std::uint8_t> u8() const;
  std::span<const std::int32_t> i32() const;

  /// Decoded values: f16 widened, i8/u8 dequantized with their qparams.
  std::vector<float> to_f32() const;

  /// Same elements, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  const Storage& storage() const noexcept { return storage_; }

  bool operator==(const Tensor& other) const;

 private:
  Tensor(Shape shape, Storage storage, std::optional<QuantParams> qparams);

  Shape shape_;
  Storage storage_{std::vector<float>{}};
  std::optional<QuantParams> qparams_;
};

}  // namespace swinq
