#include "swinq/data/image.hpp"

#include <cctype>
#include <string>

#include "swinq/errors.hpp"
#include "swinq/tensor/archive.hpp"

namespace swinq {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::size_t number() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw DataError("PPM header: expected a number");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1u << 24)) throw DataError("PPM header: value too large");
    }
    return v;
  }

  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t pos_ = 0;

 private:
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw DataError("not a binary PPM (P6) image");
  HeaderReader r(bytes);
  r.pos_ = 2;
  Image img;
  img.width = r.number();
  img.height = r.number();
  const std::size_t maxval = r.number();
  if (img.width == 0 || img.height == 0) throw DataError("PPM image has zero extent");
  if (maxval != 255) throw DataError("only 8-bit PPM (maxval 255) is supported");
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_])) throw DataError("PPM header is truncated");
  ++r.pos_;
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() - r.pos_ < n) throw DataError("PPM pixel data is truncated");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_),
                 bytes.begin() + static_cast<std::ptrdiff_t>(r.pos_ + n));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.rgb.size() != img.width * img.height * 3) throw DimensionError("image buffer does not match its extent");
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::exception& e) {
    throw DataError("cannot read " + path.string() + ": " + e.what());
  }
  try {
    return decode_ppm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_ppm(const std::filesystem::path& path, const Image& img) { write_file_bytes(path, encode_ppm(img)); }

}  // namespace swinq
