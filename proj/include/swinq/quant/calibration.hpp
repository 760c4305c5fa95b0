#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swinq/tensor/quant_params.hpp"

namespace swinq {

inline constexpr std::size_t kHistogramBins = 2048;
inline constexpr float kDefaultEmaAlpha = 0.9f;
inline constexpr double kDefaultPercentile = 99.99;

/// Running statistics of one activation site.
struct CalibrationStats {
  std::string site;
  float min = 0.0f;
  float max = 0.0f;
  float ema_min = 0.0f;
  float ema_max = 0.0f;
  /// Histogram over [hist_lo, hist_hi], kHistogramBins equal bins.
  float hist_lo = 0.0f;
  float hist_hi = 0.0f;
  std::vector<std::uint64_t> hist;
  std::uint64_t count = 0;
  std::uint64_t batches = 0;

  /// True when every observed value was identical.
  bool degenerate() const noexcept { return count > 0 && min == max; }
};

/// Folds one batch in. The first batch initializes both min/max and the EMA;
/// later batches move the EMA by r += (1 - alpha) * (batch - r). A wider
/// range rebins the existing histogram before the batch is counted.
/// Throws CalibrationError on NaN or infinite values.
void observe(CalibrationStats& stats, std::span<const float> batch, float alpha = kDefaultEmaAlpha);

/// Union of two statistics of the same site (EMA taken from `a`).
CalibrationStats merge(const CalibrationStats& a, const CalibrationStats& b);

/// Params covering [lo, hi] widened to include zero. Constant data falls
/// back to scale 1 / zero point 0.
QuantParams params_for_range(float lo, float hi, int bits, QuantScheme scheme);

QuantParams calibrate_minmax(const CalibrationStats& stats, int bits, QuantScheme scheme);
QuantParams calibrate_ema(const CalibrationStats& stats, int bits, QuantScheme scheme);
/// Clips to the [100 - p, p] percentiles of the histogram (upper bins snap
/// outward to the bin edge). p = 100 is exactly minmax.
QuantParams calibrate_percentile(const CalibrationStats& stats, int bits, QuantScheme scheme,
                                 double p = kDefaultPercentile);
/// Picks, among 119 scales evenly spaced over 0.1x..1.2x of the minmax scale
/// plus the minmax scale itself, the one with the lowest quantize-dequantize
/// MSE on `sample`. The minmax zero point is kept.
QuantParams calibrate_omse(const CalibrationStats& stats, std::span<const float> sample, int bits,
                           QuantScheme scheme);

/// Mean squared quantize-dequantize error of `sample` under `qp`, in double.
double quantization_mse(std::span<const float> sample, const QuantParams& qp);

/// Histogram-derived value below which `fraction` of the samples fall.
float histogram_quantile(const CalibrationStats& stats, double fraction, bool upper);

enum class CalibrationMethod { minmax, ema, percentile, omse, fqvit, default_range };
std::string to_string(CalibrationMethod m);
CalibrationMethod calibration_method_from_string(const std::string& s);

/// Per-site results persisted next to a run.
struct CalibrationTable {
  std::string method;
  std::size_t sample_count = 0;
  std::map<std::string, QuantParams> sites;
  std::vector<std::string> warnings;

  bool operator==(const CalibrationTable&) const = default;
};

void to_json(nlohmann::json& j, const QuantParams& qp);
void from_json(const nlohmann::json& j, QuantParams& qp);
void to_json(nlohmann::json& j, const CalibrationTable& t);
void from_json(const nlohmann::json& j, CalibrationTable& t);

}  // namespace swinq
