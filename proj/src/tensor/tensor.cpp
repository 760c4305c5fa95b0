#include "swinq/tensor/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "swinq/errors.hpp"
#include "swinq/tensor/half.hpp"

namespace swinq {

std::string_view to_string(DType t) {
  switch (t) {
    case DType::f32:
      return "f32";
    case DType::f16:
      return "f16";
    case DType::i8:
      return "i8";
    case DType::u8:
      return "u8";
    case DType::i32:
      return "i32";
  }
  return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  if (shape_numel(shape) != count)
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(count) + " elements");
}

Tensor::Storage make_storage(DType dtype, std::size_t n) {
  switch (dtype) {
    case DType::f32:
      return std::vector<float>(n, 0.0f);
    case DType::f16:
      return std::vector<std::uint16_t>(n, 0);
    case DType::i8:
      return std::vector<std::int8_t>(n, 0);
    case DType::u8:
      return std::vector<std::uint8_t>(n, 0);
    case DType::i32:
      return std::vector<std::int32_t>(n, 0);
  }
  throw std::logic_error("bad dtype");
}

template <class V>
auto& expect(Tensor::Storage& s, DType want, DType have) {
  if (want != have)
    throw std::logic_error("tensor dtype is " + std::string(to_string(have)) + ", requested " +
                           std::string(to_string(want)));
  return std::get<V>(s);
}

template <class V>
const auto& expect(const Tensor::Storage& s, DType want, DType have) {
  if (want != have)
    throw std::logic_error("tensor dtype is " + std::string(to_string(have)) + ", requested " +
                           std::string(to_string(want)));
  return std::get<V>(s);
}

}  // namespace

Tensor::Tensor(Shape shape, Storage storage, std::optional<QuantParams> qparams)
    : shape_(std::move(shape)), storage_(std::move(storage)), qparams_(std::move(qparams)) {
  check_shape(shape_, std::visit([](const auto& v) { return v.size(); }, storage_));
  const DType t = dtype();
  if ((t == DType::i8 || t == DType::u8) && !qparams_)
    throw DomainError("i8/u8 tensors require quantization parameters");
  if (qparams_) qparams_->validate();
}

Tensor Tensor::zeros(Shape shape, DType dtype, std::optional<QuantParams> qparams) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), make_storage(dtype, n), std::move(qparams));
}

Tensor Tensor::from_f32(Shape shape, std::vector<float> values) {
  return Tensor(std::move(shape), std::move(values), std::nullopt);
}

Tensor Tensor::from_f32_as_f16(Shape shape, std::span<const float> values) {
  std::vector<std::uint16_t> bits(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bits[i] = float_to_half_bits(values[i]);
  return Tensor(std::move(shape), std::move(bits), std::nullopt);
}

Tensor Tensor::from_f16_bits(Shape shape, std::vector<std::uint16_t> bits) {
  return Tensor(std::move(shape), std::move(bits), std::nullopt);
}

Tensor Tensor::from_i8(Shape shape, std::vector<std::int8_t> values, QuantParams qparams) {
  return Tensor(std::move(shape), std::move(values), std::move(qparams));
}

Tensor Tensor::from_u8(Shape shape, std::vector<std::uint8_t> values, QuantParams qparams) {
  return Tensor(std::move(shape), std::move(values), std::move(qparams));
}

Tensor Tensor::from_i32(Shape shape, std::vector<std::int32_t> values,
                        std::optional<QuantParams> qparams) {
  return Tensor(std::move(shape), std::move(values), std::move(qparams));
}

Tensor Tensor::from_storage(Shape shape, Storage storage, std::optional<QuantParams> qparams) {
  return Tensor(std::move(shape), std::move(storage), std::move(qparams));
}

std::size_t Tensor::numel() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, storage_);
}

std::span<float> Tensor::f32() {
  return expect<std::vector<float>>(storage_, DType::f32, dtype());
}
std::span<const float> Tensor::f32() const {
  return expect<std::vector<float>>(storage_, DType::f32, dtype());
}
std::span<const std::uint16_t> Tensor::f16_bits() const {
  return expect<std::vector<std::uint16_t>>(storage_, DType::f16, dtype());
}
std::span<const std::int8_t> Tensor::i8() const {
  return expect<std::vector<std::int8_t>>(storage_, DType::i8, dtype());
}
std::span<const std::uint8_t> Tensor::u8() const {
  return expect<std::vector<std::uint8_t>>(storage_, DType::u8, dtype());
}
std::span<const std::int32_t> Tensor::i32() const {
  return expect<std::vector<std::int32_t>>(storage_, DType::i32, dtype());
}

std::vector<float> Tensor::to_f32() const {
  std::vector<float> out(numel());
  switch (dtype()) {
    case DType::f32: {
      const auto src = f32();
      std::copy(src.begin(), src.end(), out.begin());
      break;
    }
    case DType::f16: {
      const auto src = f16_bits();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = half_bits_to_float(src[i]);
      break;
    }
    case DType::i8:
    case DType::u8: {
      const QuantParams& qp = *qparams_;
      auto level = [&](std::size_t i) -> std::int32_t {
        return dtype() == DType::i8 ? std::int32_t{i8()[i]} : std::int32_t{u8()[i]};
      };
      const std::size_t channels = qp.exponents.size();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const std::int32_t q = level(i) - qp.zero_point;
        if (qp.scheme == QuantScheme::log2) {
          out[i] = std::ldexp(1.0f, -level(i));
        } else if (channels) {
          // Per-channel exponents apply along the last axis.
          const std::size_t c = i % channels;
          out[i] = static_cast<float>(q) * (qp.scale / static_cast<float>(1u << qp.exponents[c]));
        } else {
          out[i] = static_cast<float>(q) * qp.scale;
        }
      }
      break;
    }
    case DType::i32: {
      const auto src = i32();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(src[i]);
      break;
    }
  }
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), storage_, qparams_);
}

bool Tensor::operator==(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype() != other.dtype() || qparams_ != other.qparams_) return false;
  return std::visit(
      [&](const auto& a) {
        using V = std::decay_t<decltype(a)>;
        const auto& b = std::get<V>(other.storage_);
        return a.size() == b.size() &&
               (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(a[0])) == 0);
      },
      storage_);
}

}  // namespace swinq
