#include "swinq/engine/engine.hpp"

#include <zlib.h>

#include <array>
#include <cstring>

#include "swinq/errors.hpp"
#include "swinq/quant/quantize.hpp"

namespace swinq {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'S', 'W', 'Q', 'E'};
constexpr std::uint8_t kNoMethod = 255;
const std::string kActPrefix = "act.";
const std::string kScalesSuffix = ".scales";

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
  if (bytes.size() - pos < 4) throw FormatError(std::string("truncated engine file reading ") + what, pos);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint8_t get_u8(std::span<const std::uint8_t> bytes, std::size_t& pos, const char* what) {
  if (pos >= bytes.size()) throw FormatError(std::string("truncated engine file reading ") + what, pos);
  return bytes[pos++];
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

QuantParams unit_weight_params(int bits) {
  QuantParams qp;
  qp.scheme = QuantScheme::symmetric;
  qp.bits = bits;
  return qp;
}

TensorArchive commit_weights(const ParameterSet& params, const PrecisionMode& mode) {
  TensorArchive a;
  for (const auto& [name, t] : params.entries()) {
    if (t.ndim() != 2 || mode.precision == Precision::fp32) {
      a.add(name, t);
    } else if (mode.precision == Precision::fp16) {
      a.add(name, Tensor::from_f32_as_f16(t.shape(), t.f32()));
    } else {
      ChannelQuantized q = quantize_weight_per_channel(t.f32(), t.dim(0), t.dim(1), mode.weight_bits);
      a.add(name, Tensor::from_i8(t.shape(), std::move(q.levels), unit_weight_params(mode.weight_bits)));
      a.add(name + kScalesSuffix, Tensor::from_f32({t.dim(0)}, std::move(q.scales)));
    }
  }
  return a;
}

}  // namespace

std::string to_string(Precision p) {
  switch (p) {
    case Precision::fp32:
      return "fp32";
    case Precision::fp16:
      return "fp16";
    case Precision::int8:
      return "int8";
  }
  return "unknown";
}

Precision precision_from_string(const std::string& s) {
  for (Precision p : {Precision::fp32, Precision::fp16, Precision::int8})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown precision '" + s + "' (expected fp32, fp16 or int8)");
}

PrecisionMode PrecisionMode::fp32() { return {}; }

PrecisionMode PrecisionMode::fp16() { return {Precision::fp16, std::nullopt, 16, 16, 16}; }

PrecisionMode PrecisionMode::int8(CalibrationMethod method) {
  return {Precision::int8, method, 8, 8, method == CalibrationMethod::fqvit ? 4 : 8};
}

void PrecisionMode::validate() const {
  PrecisionMode expect;
  switch (precision) {
    case Precision::fp32:
      expect = fp32();
      break;
    case Precision::fp16:
      expect = fp16();
      break;
    case Precision::int8:
      if (!method) throw ConfigError("int8 precision needs a calibration method");
      expect = int8(*method);
      break;
  }
  if (precision != Precision::int8 && method) throw ConfigError("only int8 precision takes a calibration method");
  if (*this != expect) throw ConfigError("bit triple " + bits_label() + " does not match " + to_string(precision));
}

std::string PrecisionMode::bits_label() const {
  return std::to_string(weight_bits) + "/" + std::to_string(activation_bits) + "/" + std::to_string(attention_bits);
}

Engine build_engine(const ParameterSet& params, const ModelConfig& cfg, const PrecisionMode& mode,
                    std::span<const std::vector<float>> calibration_images, const CalibrationOptions& options) {
  mode.validate();
  if (mode.precision != Precision::int8) return build_engine_from_table(params, cfg, mode, CalibrationTable{});
  return build_engine_from_table(params, cfg, mode, calibrate(params, cfg, *mode.method, calibration_images, options));
}

Engine build_engine_from_table(const ParameterSet& params, const ModelConfig& cfg, const PrecisionMode& mode,
                              const CalibrationTable& table) {
  mode.validate();
  cfg.validate();
  if (params.scalar_count() != param_count(cfg)) throw ConfigError("parameters do not match the model config");
  Engine e;
  e.config = cfg;
  e.mode = mode;
  e.tensors = commit_weights(params, mode);
  if (mode.precision == Precision::int8) {
    if (table.method != to_string(*mode.method))
      throw ConfigError("calibration table is for '" + table.method + "', engine wants '" +
                        to_string(*mode.method) + "'");
    for (const auto& site : activation_sites(cfg, *mode.method)) {
      const auto it = table.sites.find(site);
      if (it == table.sites.end()) throw CalibrationError("calibration table has no entry for '" + site + "'");
      e.activations.emplace(site, it->second);
    }
  }
  return e;
}

TypedParams<float> engine_weights(const Engine& engine) {
  TypedParams<float> out;
  for (const auto& spec : param_specs(engine.config)) {
    const Tensor& t = engine.tensors.at(spec.name);
    std::vector<float> v;
    if (t.dtype() == DType::i8) {
      const auto levels = t.i8();
      const auto scales = engine.tensors.at(spec.name + kScalesSuffix).f32();
      const std::size_t in = t.dim(1);
      v.resize(levels.size());
      for (std::size_t i = 0; i < levels.size(); ++i) v[i] = static_cast<float>(levels[i]) * scales[i / in];
    } else {
      v = t.to_f32();
    }
    out.entries.push_back({spec.name, spec.shape, std::move(v)});
  }
  return out;
}

std::vector<std::uint8_t> serialize_engine(const Engine& engine) {
  engine.mode.validate();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, kEngineVersion);
  out.push_back(static_cast<std::uint8_t>(engine.mode.precision));
  out.push_back(engine.mode.method ? static_cast<std::uint8_t>(*engine.mode.method) : kNoMethod);
  out.push_back(static_cast<std::uint8_t>(engine.mode.weight_bits));
  out.push_back(static_cast<std::uint8_t>(engine.mode.activation_bits));
  out.push_back(static_cast<std::uint8_t>(engine.mode.attention_bits));
  const std::string config = nlohmann::json(engine.config).dump();
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out.insert(out.end(), config.begin(), config.end());

  TensorArchive archive = engine.tensors;
  for (const auto& [site, qp] : engine.activations) {
    if (qp.scheme == QuantScheme::pot_channel) {
      QuantParams bare = qp;
      bare.exponents.clear();
      const Shape shape{qp.exponents.size()};
      archive.add(kActPrefix + site,
                  Tensor::from_i32(shape, std::vector<std::int32_t>(qp.exponents.begin(), qp.exponents.end()), bare));
    } else {
      archive.add(kActPrefix + site, Tensor::from_u8({1}, {0}, qp));
    }
  }
  const auto body = archive_write(archive);
  out.insert(out.end(), body.begin(), body.end());
  put_u32(out, crc32_of(out));
  return out;
}

Engine deserialize_engine(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
    throw FormatError("not an engine file (bad magic)", 0);
  if (bytes.size() < 4 + 4 + 5 + 4 + 4) throw FormatError("truncated engine file", bytes.size());
  const std::size_t crc_pos = bytes.size() - 4;
  std::size_t tail = crc_pos;
  const std::uint32_t stored_crc = get_u32(bytes, tail, "checksum");

  std::size_t pos = kMagic.size();
  const std::uint32_t version = get_u32(bytes, pos, "version");
  if (version != kEngineVersion)
    throw FormatError("unsupported engine version " + std::to_string(version), pos - 4);
  if (stored_crc != crc32_of(bytes.first(crc_pos))) throw FormatError("engine checksum mismatch", crc_pos);

  Engine e;
  const std::size_t tag_pos = pos;
  const std::uint8_t tag = get_u8(bytes, pos, "precision");
  if (tag > static_cast<std::uint8_t>(Precision::int8))
    throw FormatError("unknown precision tag " + std::to_string(tag), tag_pos);
  e.mode.precision = static_cast<Precision>(tag);
  const std::size_t method_pos = pos;
  const std::uint8_t method = get_u8(bytes, pos, "method");
  if (method != kNoMethod) {
    if (method > static_cast<std::uint8_t>(CalibrationMethod::default_range))
      throw FormatError("unknown calibration method " + std::to_string(method), method_pos);
    e.mode.method = static_cast<CalibrationMethod>(method);
  }
  const std::size_t bits_pos = pos;
  e.mode.weight_bits = get_u8(bytes, pos, "weight bits");
  e.mode.activation_bits = get_u8(bytes, pos, "activation bits");
  e.mode.attention_bits = get_u8(bytes, pos, "attention bits");
  try {
    e.mode.validate();
  } catch (const ConfigError& err) {
    throw FormatError(err.what(), bits_pos);
  }

  const std::size_t len_pos = pos;
  const std::uint32_t len = get_u32(bytes, pos, "config length");
  if (len > crc_pos - pos) throw FormatError("config length exceeds the file", len_pos);
  try {
    const auto j = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                         bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    e.config = j.get<ModelConfig>();
    e.config.validate();
  } catch (const std::exception& err) {
    throw FormatError(std::string("bad model config: ") + err.what(), pos);
  }
  pos += len;

  const std::size_t archive_pos = pos;
  TensorArchive archive = archive_read_at(bytes.first(crc_pos), pos);
  if (pos != crc_pos) throw FormatError("trailing bytes after the tensor archive", pos);

  for (const auto& [name, t] : archive.entries()) {
    if (!name.starts_with(kActPrefix)) {
      e.tensors.add(name, t);
      continue;
    }
    if (!t.qparams()) throw FormatError("activation entry '" + name + "' has no qparams", archive_pos);
    QuantParams qp = *t.qparams();
    if (t.dtype() == DType::i32)
      for (std::int32_t x : t.i32()) qp.exponents.push_back(static_cast<std::uint8_t>(x));
    e.activations.emplace(name.substr(kActPrefix.size()), std::move(qp));
  }

  for (const auto& spec : param_specs(e.config)) {
    const Tensor* t = e.tensors.find(spec.name);
    if (!t) throw FormatError("engine is missing parameter '" + spec.name + "'", archive_pos);
    if (t->shape() != spec.shape) throw FormatError("parameter '" + spec.name + "' has the wrong shape", archive_pos);
    if (t->dtype() == DType::i8 && !e.tensors.contains(spec.name + kScalesSuffix))
      throw FormatError("int8 parameter '" + spec.name + "' has no scales", archive_pos);
  }
  if (e.mode.precision == Precision::int8)
    for (const auto& site : activation_sites(e.config, *e.mode.method))
      if (!e.activations.count(site))
        throw FormatError("engine has no activation params for '" + site + "'", archive_pos);
  return e;
}

void save_engine(const Engine& engine, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_engine(engine));
}

Engine load_engine(const std::filesystem::path& path) { return deserialize_engine(read_file_bytes(path)); }

double engine_size_mb(const Engine& engine) {
  return static_cast<double>(serialize_engine(engine).size()) / static_cast<double>(1 << 20);
}

}  // namespace swinq
