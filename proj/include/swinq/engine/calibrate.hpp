#pragma once

// Activation calibration: a full-precision pass over sample images that
// records per-site statistics and turns them into quantization params.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "swinq/model/config.hpp"
#include "swinq/model/params.hpp"
#include "swinq/quant/calibration.hpp"

namespace swinq {

/// Largest power-of-two channel factor of a layer-norm input.
inline constexpr int kPtfMaxExponent = 3;
/// Symmetric range assumed by the uncalibrated int8 mode.
inline constexpr float kDefaultActivationRange = 8.0f;

struct CalibrationOptions {
  float ema_alpha = kDefaultEmaAlpha;
  double percentile = kDefaultPercentile;
  /// OMSE keeps at most this many values per site (evenly strided).
  std::size_t omse_sample_limit = std::size_t{1} << 20;
};

/// Activation sites an int8 engine quantizes, in forward order:
/// `<layer>.in` for every linear layer, `<layer>.out` for all but the head,
/// `<block>.attn.probs`, and for fqvit the `<norm>.in` sites as well.
std::vector<std::string> activation_sites(const ModelConfig& cfg, CalibrationMethod method);

/// Runs the f32 model over `images` (one observation batch per image) and
/// derives the activation table of `method`. Constant sites fall back to
/// scale 1 / zero point 0 with a warning. default_range needs no images.
/// Throws CalibrationError on an empty set or non-finite activations.
CalibrationTable calibrate(const ParameterSet& params, const ModelConfig& cfg, CalibrationMethod method,
                           std::span<const std::vector<float>> images, const CalibrationOptions& options = {});

}  // namespace swinq
