#include "swinq/tensor/archive.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "swinq/errors.hpp"

namespace swinq {

namespace {

static_assert(std::endian::native == std::endian::little,
              "element payloads are copied verbatim as little-endian");

constexpr std::array<std::uint8_t, 4> kMagic = {0x53, 0x57, 0x54, 0x41};  // "SWTA"

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

  template <class T>
  void elements(const std::vector<T>& v) {
    bytes(v.data(), v.size() * sizeof(T));
  }

 private:
  template <class U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::size_t offset) : bytes_(bytes), pos_(offset) {}

  std::size_t pos() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n || pos_ > bytes_.size())
      throw FormatError(std::string("truncated payload while reading ") + what, pos_);
  }

  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get_le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get_le(4, what)); }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void copy(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  std::uint64_t get_le(std::size_t n, const char* what) {
    need(n, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

template <class T>
std::vector<T> read_elements(ByteReader& r, std::size_t n) {
  std::vector<T> v(n);
  r.copy(v.data(), n * sizeof(T), "tensor elements");
  return v;
}

}  // namespace

void TensorArchive::add(std::string name, Tensor tensor) {
  if (contains(name)) throw FormatError("duplicate tensor name '" + name + "'", 0);
  entries_.emplace_back(std::move(name), std::move(tensor));
}

bool TensorArchive::contains(const std::string& name) const { return find(name) != nullptr; }

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return &t;
  return nullptr;
}

const Tensor& TensorArchive::at(const std::string& name) const {
  if (const Tensor* t = find(name)) return *t;
  throw std::out_of_range("archive has no tensor named '" + name + "'");
}

std::vector<std::uint8_t> archive_write(const TensorArchive& archive) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(archive.version);
  w.u32(static_cast<std::uint32_t>(archive.size()));
  std::unordered_set<std::string> seen;
  for (const auto& [name, t] : archive.entries()) {
    if (!seen.insert(name).second) throw FormatError("duplicate tensor name '" + name + "'", out.size());
    if (name.size() > 0xffff) throw FormatError("tensor name too long", out.size());
    if (t.ndim() > 0xff) throw FormatError("too many dimensions", out.size());
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.u8(static_cast<std::uint8_t>(t.ndim()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    if (const auto& qp = t.qparams()) {
      w.u8(1);
      w.f32(qp->scale);
      w.i32(qp->zero_point);
      w.u8(static_cast<std::uint8_t>(qp->bits));
      w.u8(static_cast<std::uint8_t>(qp->scheme));
    } else {
      w.u8(0);
    }
    std::visit([&](const auto& v) { w.elements(v); }, t.storage());
  }
  return out;
}

TensorArchive archive_read_at(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  ByteReader r(bytes, offset);
  std::array<std::uint8_t, 4> magic{};
  r.copy(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad magic, expected SWTA", offset);

  TensorArchive archive;
  archive.version = r.u32("version");
  if (archive.version != TensorArchive::kVersion)
    throw FormatError("unsupported archive version " + std::to_string(archive.version), r.pos() - 4);
  const std::uint32_t count = r.u32("tensor count");

  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_start = r.pos();
    const std::uint16_t name_len = r.u16("name length");
    std::string name(name_len, '\0');
    r.copy(name.data(), name_len, "name");
    if (archive.contains(name)) throw FormatError("duplicate tensor name '" + name + "'", entry_start);

    const std::size_t dtype_pos = r.pos();
    const std::uint8_t dtype_code = r.u8("dtype");
    if (dtype_code > static_cast<std::uint8_t>(DType::i32))
      throw FormatError("unknown dtype code " + std::to_string(dtype_code), dtype_pos);
    const auto dtype = static_cast<DType>(dtype_code);

    const std::uint8_t ndim = r.u8("ndim");
    Shape shape(ndim);
    std::size_t numel = 1;
    for (auto& d : shape) {
      const std::size_t dim_pos = r.pos();
      d = r.u32("dimension");
      if (d == 0) throw FormatError("zero extent in tensor '" + name + "'", dim_pos);
      numel *= d;
      if (numel > bytes.size()) throw FormatError("tensor '" + name + "' larger than the file", dim_pos);
    }

    std::optional<QuantParams> qparams;
    const std::size_t qp_pos = r.pos();
    const std::uint8_t has_qp = r.u8("has_qparams");
    if (has_qp > 1) throw FormatError("has_qparams must be 0 or 1", qp_pos);
    if (has_qp) {
      QuantParams qp;
      qp.scale = r.f32("scale");
      qp.zero_point = r.i32("zero point");
      qp.bits = r.u8("bits");
      const std::size_t scheme_pos = r.pos();
      const std::uint8_t scheme = r.u8("scheme");
      if (scheme > static_cast<std::uint8_t>(QuantScheme::pot_channel))
        throw FormatError("unknown quantization scheme " + std::to_string(scheme), scheme_pos);
      qp.scheme = static_cast<QuantScheme>(scheme);
      try {
        qp.validate();
      } catch (const DomainError& e) {
        throw FormatError(std::string("invalid quantization parameters: ") + e.what(), qp_pos);
      }
      qparams = qp;
    }
    if ((dtype == DType::i8 || dtype == DType::u8) && !qparams)
      throw FormatError("i8/u8 tensor '" + name + "' without quantization parameters", qp_pos);

    r.need(numel * dtype_size(dtype), "tensor elements");
    Tensor::Storage storage;
    switch (dtype) {
      case DType::f32:
        storage = read_elements<float>(r, numel);
        break;
      case DType::f16:
        storage = read_elements<std::uint16_t>(r, numel);
        break;
      case DType::i8:
        storage = read_elements<std::int8_t>(r, numel);
        break;
      case DType::u8:
        storage = read_elements<std::uint8_t>(r, numel);
        break;
      case DType::i32:
        storage = read_elements<std::int32_t>(r, numel);
        break;
    }
    Tensor t = Tensor::from_storage(std::move(shape), std::move(storage), std::move(qparams));
    archive.add(std::move(name), std::move(t));
  }
  offset = r.pos();
  return archive;
}

TensorArchive archive_read(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  TensorArchive archive = archive_read_at(bytes, offset);
  if (offset != bytes.size()) throw FormatError("trailing bytes after archive", offset);
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void archive_save(const TensorArchive& archive, const std::filesystem::path& path) {
  write_file_bytes(path, archive_write(archive));
}

TensorArchive archive_load(const std::filesystem::path& path) {
  return archive_read(read_file_bytes(path));
}

}  // namespace swinq
