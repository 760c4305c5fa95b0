#include "swinq/quant/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "swinq/errors.hpp"
#include "swinq/quant/quantize.hpp"

namespace swinq {

namespace {

std::size_t bin_of(float x, float lo, float hi) {
  if (!(hi > lo)) return 0;
  const double pos = (static_cast<double>(x) - lo) / (static_cast<double>(hi) - lo) * kHistogramBins;
  return std::min<std::size_t>(kHistogramBins - 1, static_cast<std::size_t>(std::max(0.0, std::floor(pos))));
}

// Moves each old bin's count to the new bin containing the old bin's center.
std::vector<std::uint64_t> rebin(const std::vector<std::uint64_t>& hist, float lo, float hi, float new_lo,
                                 float new_hi) {
  std::vector<std::uint64_t> out(kHistogramBins, 0);
  const double w = (static_cast<double>(hi) - lo) / kHistogramBins;
  for (std::size_t k = 0; k < hist.size(); ++k) {
    if (hist[k] == 0) continue;
    const double center = lo + (static_cast<double>(k) + 0.5) * w;
    out[bin_of(static_cast<float>(center), new_lo, new_hi)] += hist[k];
  }
  return out;
}

}  // namespace

void observe(CalibrationStats& stats, std::span<const float> batch, float alpha) {
  if (batch.empty()) return;
  if (!(alpha >= 0.0f && alpha < 1.0f)) throw DomainError("EMA alpha must lie in [0, 1)");
  float bmin = std::numeric_limits<float>::infinity(), bmax = -bmin;
  for (float v : batch) {
    if (!std::isfinite(v)) throw CalibrationError("non-finite activation at site '" + stats.site + "'");
    bmin = std::min(bmin, v);
    bmax = std::max(bmax, v);
  }
  if (stats.count == 0) {
    stats.min = stats.ema_min = stats.hist_lo = bmin;
    stats.max = stats.ema_max = stats.hist_hi = bmax;
    stats.hist.assign(kHistogramBins, 0);
  } else {
    stats.min = std::min(stats.min, bmin);
    stats.max = std::max(stats.max, bmax);
    stats.ema_min += (1.0f - alpha) * (bmin - stats.ema_min);
    stats.ema_max += (1.0f - alpha) * (bmax - stats.ema_max);
    if (bmin < stats.hist_lo || bmax > stats.hist_hi) {
      const float lo = std::min(stats.hist_lo, bmin), hi = std::max(stats.hist_hi, bmax);
      stats.hist = rebin(stats.hist, stats.hist_lo, stats.hist_hi, lo, hi);
      stats.hist_lo = lo;
      stats.hist_hi = hi;
    }
  }
  for (float v : batch) ++stats.hist[bin_of(v, stats.hist_lo, stats.hist_hi)];
  stats.count += batch.size();
  ++stats.batches;
}

CalibrationStats merge(const CalibrationStats& a, const CalibrationStats& b) {
  if (a.site != b.site) throw CalibrationError("cannot merge statistics of '" + a.site + "' and '" + b.site + "'");
  if (b.count == 0) return a;
  if (a.count == 0) return b;
  CalibrationStats m = a;
  m.min = std::min(a.min, b.min);
  m.max = std::max(a.max, b.max);
  m.hist_lo = std::min(a.hist_lo, b.hist_lo);
  m.hist_hi = std::max(a.hist_hi, b.hist_hi);
  m.hist = rebin(a.hist, a.hist_lo, a.hist_hi, m.hist_lo, m.hist_hi);
  const auto hb = rebin(b.hist, b.hist_lo, b.hist_hi, m.hist_lo, m.hist_hi);
  for (std::size_t k = 0; k < kHistogramBins; ++k) m.hist[k] += hb[k];
  m.count = a.count + b.count;
  m.batches = a.batches + b.batches;
  return m;
}

QuantParams params_for_range(float lo, float hi, int bits, QuantScheme scheme) {
  if (scheme != QuantScheme::affine && scheme != QuantScheme::symmetric)
    throw DomainError("range calibration supports affine and symmetric schemes");
  if (!(lo <= hi)) throw CalibrationError("calibration range is inverted");
  QuantParams qp;
  qp.scheme = scheme;
  qp.bits = bits;
  if (lo == hi) return qp;
  lo = std::min(lo, 0.0f);
  hi = std::max(hi, 0.0f);
  if (scheme == QuantScheme::affine) {
    const float levels = static_cast<float>((1 << bits) - 1);
    qp.scale = (hi - lo) / levels;
    qp.zero_point = static_cast<std::int32_t>(std::clamp(std::nearbyint(-lo / qp.scale), 0.0f, levels));
  } else {
    qp.scale = std::max(-lo, hi) / static_cast<float>((1 << (bits - 1)) - 1);
  }
  return qp;
}

namespace {

void require_samples(const CalibrationStats& stats) {
  if (stats.count == 0) throw CalibrationError("site '" + stats.site + "' has no observations");
}

}  // namespace

QuantParams calibrate_minmax(const CalibrationStats& stats, int bits, QuantScheme scheme) {
  require_samples(stats);
  return params_for_range(stats.min, stats.max, bits, scheme);
}

QuantParams calibrate_ema(const CalibrationStats& stats, int bits, QuantScheme scheme) {
  require_samples(stats);
  if (stats.degenerate()) return params_for_range(stats.min, stats.max, bits, scheme);
  return params_for_range(stats.ema_min, stats.ema_max, bits, scheme);
}

float histogram_quantile(const CalibrationStats& stats, double fraction, bool upper) {
  require_samples(stats);
  // Rank of the quantile sample; the epsilon absorbs decimal fractions such as 0.999.
  const double target = std::ceil(fraction * static_cast<double>(stats.count) - 1e-9);
  const double w = (static_cast<double>(stats.hist_hi) - stats.hist_lo) / kHistogramBins;
  std::uint64_t cum = 0;
  for (std::size_t k = 0; k < stats.hist.size(); ++k) {
    cum += stats.hist[k];
    if (static_cast<double>(cum) >= target && cum > 0)
      return static_cast<float>(stats.hist_lo + (static_cast<double>(k) + (upper ? 1.0 : 0.0)) * w);
  }
  return stats.hist_hi;
}

QuantParams calibrate_percentile(const CalibrationStats& stats, int bits, QuantScheme scheme, double p) {
  if (!(p > 0.0 && p <= 100.0)) throw DomainError("percentile must lie in (0, 100]");
  require_samples(stats);
  if (p == 100.0 || stats.degenerate()) return calibrate_minmax(stats, bits, scheme);
  float lo = histogram_quantile(stats, (100.0 - p) / 100.0, false);
  float hi = histogram_quantile(stats, p / 100.0, true);
  lo = std::clamp(lo, stats.min, stats.max);
  hi = std::clamp(hi, stats.min, stats.max);
  if (lo > hi) std::swap(lo, hi);
  if (lo == hi) return calibrate_minmax(stats, bits, scheme);
  return params_for_range(lo, hi, bits, scheme);
}

double quantization_mse(std::span<const float> sample, const QuantParams& qp) {
  if (sample.empty()) return 0.0;
  double sum = 0.0;
  for (float x : sample) {
    const double d = static_cast<double>(dequantize_value(quantize_value(x, qp), qp)) - x;
    sum += d * d;
  }
  return sum / static_cast<double>(sample.size());
}

QuantParams calibrate_omse(const CalibrationStats& stats, std::span<const float> sample, int bits,
                           QuantScheme scheme) {
  if (sample.empty()) throw CalibrationError("OMSE needs a non-empty calibration sample");
  const QuantParams base = calibrate_minmax(stats, bits, scheme);
  if (stats.degenerate()) return base;
  QuantParams best = base;
  double best_mse = quantization_mse(sample, base);
  constexpr int kGrid = 119;
  for (int i = 0; i < kGrid; ++i) {
    const double factor = 0.1 + 1.1 * static_cast<double>(i) / (kGrid - 1);
    QuantParams qp = base;
    qp.scale = static_cast<float>(base.scale * factor);
    if (!(qp.scale > 0.0f)) continue;
    const double mse = quantization_mse(sample, qp);
    if (mse < best_mse) {
      best_mse = mse;
      best = qp;
    }
  }
  return best;
}

std::string to_string(CalibrationMethod m) {
  switch (m) {
    case CalibrationMethod::minmax: return "minmax";
    case CalibrationMethod::ema: return "ema";
    case CalibrationMethod::percentile: return "percentile";
    case CalibrationMethod::omse: return "omse";
    case CalibrationMethod::fqvit: return "fqvit";
    case CalibrationMethod::default_range: return "default_range";
  }
  return "unknown";
}

CalibrationMethod calibration_method_from_string(const std::string& s) {
  for (auto m : {CalibrationMethod::minmax, CalibrationMethod::ema, CalibrationMethod::percentile,
                 CalibrationMethod::omse, CalibrationMethod::fqvit, CalibrationMethod::default_range})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown calibration method '" + s + "'");
}

void to_json(nlohmann::json& j, const QuantParams& qp) {
  j = nlohmann::json{{"scheme", std::string(to_string(qp.scheme))},
                     {"bits", qp.bits},
                     {"scale", qp.scale},
                     {"zero_point", qp.zero_point}};
  if (!qp.exponents.empty()) j["exponents"] = qp.exponents;
}

void from_json(const nlohmann::json& j, QuantParams& qp) {
  qp.scheme = quant_scheme_from_string(j.at("scheme").get<std::string>());
  qp.bits = j.at("bits").get<int>();
  qp.scale = j.at("scale").get<float>();
  qp.zero_point = j.at("zero_point").get<std::int32_t>();
  qp.exponents = j.contains("exponents") ? j.at("exponents").get<std::vector<std::uint8_t>>()
                                         : std::vector<std::uint8_t>{};
  qp.validate();
}

void to_json(nlohmann::json& j, const CalibrationTable& t) {
  j = nlohmann::json{{"method", t.method}, {"sample_count", t.sample_count}, {"sites", t.sites},
                     {"warnings", t.warnings}};
}

void from_json(const nlohmann::json& j, CalibrationTable& t) {
  j.at("method").get_to(t.method);
  j.at("sample_count").get_to(t.sample_count);
  j.at("sites").get_to(t.sites);
  t.warnings = j.value("warnings", std::vector<std::string>{});
}

}  // namespace swinq
