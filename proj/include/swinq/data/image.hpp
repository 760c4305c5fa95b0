#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace swinq {

/// 8-bit interleaved RGB image, row-major [height, width, 3].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Binary PPM (P6, maxval 255). Throws DataError on malformed input.
Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);

/// Reads and decodes an image file; errors name the path.
Image load_image(const std::filesystem::path& path);
void save_ppm(const std::filesystem::path& path, const Image& img);

}  // namespace swinq
