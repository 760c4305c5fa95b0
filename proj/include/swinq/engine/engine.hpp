#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swinq/engine/calibrate.hpp"
#include "swinq/model/config.hpp"
#include "swinq/model/params.hpp"
#include "swinq/quant/calibration.hpp"
#include "swinq/tensor/archive.hpp"

namespace swinq {

enum class Precision : std::uint8_t { fp32 = 0, fp16 = 1, int8 = 2 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

/// Precision tag, int8 calibration method and the w/a/att bit triple.
struct PrecisionMode {
  Precision precision = Precision::fp32;
  std::optional<CalibrationMethod> method;
  int weight_bits = 32;
  int activation_bits = 32;
  int attention_bits = 32;

  static PrecisionMode fp32();
  static PrecisionMode fp16();
  static PrecisionMode int8(CalibrationMethod method);

  /// Throws ConfigError when the bits do not match the tag and method.
  void validate() const;
  /// "8/8/4" style.
  std::string bits_label() const;

  bool operator==(const PrecisionMode&) const = default;
};

/// A model committed to one precision. `tensors` holds the weights in their
/// stored form:
///   fp32  every parameter f32
///   fp16  matrices f16, vectors f32
///   int8  matrices i8 with `<name>.scales` (f32, one per output row); the
///         i8 tensor itself carries unit symmetric qparams. Vectors stay f32.
/// `activations` has one entry per quantized activation site (int8 only).
struct Engine {
  ModelConfig config;
  PrecisionMode mode;
  TensorArchive tensors;
  std::map<std::string, QuantParams> activations;

  bool operator==(const Engine&) const = default;
};

/// Calibrates when the method needs it, then commits the weights.
Engine build_engine(const ParameterSet& params, const ModelConfig& cfg, const PrecisionMode& mode,
                    std::span<const std::vector<float>> calibration_images, const CalibrationOptions& options = {});

/// Commits the weights using an already computed activation table.
Engine build_engine_from_table(const ParameterSet& params, const ModelConfig& cfg, const PrecisionMode& mode,
                    const CalibrationTable& table);

/// The f32 values the engine computes with (f16 widened, i8 dequantized).
TypedParams<float> engine_weights(const Engine& engine);

inline constexpr std::uint32_t kEngineVersion = 1;

/// "SWQE" | u32 version | u8 precision | u8 method (255 = none) | u8 w, a, att bits |
/// u32 config length | config JSON | SWTA archive | u32 CRC32 of everything before it.
/// Activation params travel in the archive as `act.<site>` entries.
std::vector<std::uint8_t> serialize_engine(const Engine& engine);
/// Throws FormatError with the byte offset of the first problem.
Engine deserialize_engine(std::span<const std::uint8_t> bytes);

void save_engine(const Engine& engine, const std::filesystem::path& path);
Engine load_engine(const std::filesystem::path& path);

/// Serialized bytes / 2^20.
double engine_size_mb(const Engine& engine);

}  // namespace swinq
