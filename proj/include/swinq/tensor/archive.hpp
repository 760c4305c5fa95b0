#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swinq/tensor/tensor.hpp"

namespace swinq {

/// Ordered, uniquely named tensor collection persisted in the SWTA format:
///
///   "SWTA" | u32 version | u32 count |
///   per tensor: u16 name_len, name, u8 dtype, u8 ndim, ndim x u32 dims,
///               u8 has_qparams [, f32 scale, i32 zero_point, u8 bits, u8 scheme],
///               raw little-endian elements
///
/// All integers little-endian. Per-channel exponent lists are not part of the
/// format; callers store them as separate tensors.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;

  /// Throws FormatError(offset 0) on a duplicate name.
  void add(std::string name, Tensor tensor);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  const Tensor* find(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept {
    return entries_;
  }
  std::size_t size() const noexcept { return entries_.size(); }

  bool operator==(const TensorArchive&) const = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

std::vector<std::uint8_t> archive_write(const TensorArchive& archive);
/// Throws FormatError with the byte offset of the first problem.
TensorArchive archive_read(std::span<const std::uint8_t> bytes);

/// Reads an archive starting at `offset`; advances `offset` past it.
TensorArchive archive_read_at(std::span<const std::uint8_t> bytes, std::size_t& offset);

void archive_save(const TensorArchive& archive, const std::filesystem::path& path);
TensorArchive archive_load(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace swinq
