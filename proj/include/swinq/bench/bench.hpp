#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "swinq/data/dataset.hpp"
#include "swinq/engine/runtime.hpp"

namespace swinq {

/// Single-stream latency of one inference, in milliseconds.
struct LatencyStats {
  std::size_t warmup_iters = 0;
  std::size_t measured_iters = 0;
  std::vector<double> times_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
  /// 1000 / mean_ms.
  double fps = 0.0;

  /// Summaries of already measured iterations. Throws DomainError for fewer
  /// than 10 times or a non-positive mean.
  static LatencyStats from_times(std::size_t warmup, std::vector<double> times_ms);
};

void to_json(nlohmann::json& j, const LatencyStats& s);
void from_json(const nlohmann::json& j, LatencyStats& s);

/// Times `iters` calls of `run` on a steady clock after `warmup` untimed ones.
LatencyStats measure_latency(const std::function<void()>& run, std::size_t warmup = 10, std::size_t iters = 100);
/// Batch size 1 on one image; preprocessing is not timed.
LatencyStats measure_latency(const EngineRuntime& runtime, std::span<const float> image, std::size_t warmup = 10,
                             std::size_t iters = 100);

struct ClassificationMetrics {
  double accuracy = 0.0;
  /// Macro averages over all classes; a class with no support or no
  /// predictions contributes 0 for the undefined ratio.
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::vector<double> class_f1;
  /// confusion[true][pred].
  std::vector<std::vector<std::size_t>> confusion;
};

void to_json(nlohmann::json& j, const ClassificationMetrics& m);

/// Throws DimensionError on a length mismatch or empty input, DomainError
/// for a class index >= num_classes.
ClassificationMetrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                      std::size_t num_classes);

struct Prediction {
  std::string path;
  std::size_t label = 0;
  std::size_t pred = 0;
  std::vector<float> logits;
};

void to_json(nlohmann::json& j, const Prediction& p);

struct Evaluation {
  ClassificationMetrics metrics;
  std::vector<Prediction> predictions;
  /// Images that failed to decode and were skipped.
  std::vector<std::string> failed;
};

/// Runs every sample through the engine; results keep sample order whatever
/// the thread count.
Evaluation evaluate(const EngineRuntime& runtime, const std::vector<Sample>& samples, std::size_t threads = 1);
/// Loads and evaluates the test split of `index`.
Evaluation evaluate(const EngineRuntime& runtime, const DatasetIndex& index, const PreprocessSpec& spec,
                    std::size_t threads = 1);

/// One JSON object per line.
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);

/// Row labels in report order.
const std::vector<std::string>& report_methods();

struct ReportRow {
  std::string dataset;
  std::string method;
  std::string bits;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double latency_ms = 0.0;
  double fps = 0.0;
  double model_size_mb = 0.0;
  std::size_t thread_count = 1;
  std::string host;
};

void to_json(nlohmann::json& j, const ReportRow& r);
void from_json(const nlohmann::json& j, ReportRow& r);

/// Rows grouped by dataset (first appearance) and ordered by report_methods().
/// Throws DomainError on an empty list, an unknown method, a duplicate
/// (dataset, method), a metric outside [0, 1], a non-positive size or an FPS
/// more than 0.5% away from 1000 / latency.
std::vector<ReportRow> order_report(std::vector<ReportRow> rows);

std::string report_csv(const std::vector<ReportRow>& rows);
/// Aligned table plus any notes (calibration warnings) underneath.
std::string report_markdown(const std::vector<ReportRow>& rows, const std::vector<std::string>& notes = {});

/// Writes `report.csv` and `report.md` into `dir`; returns the ordered rows.
std::vector<ReportRow> emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dir,
                                   const std::vector<std::string>& notes = {});

/// "<os> <machine>, <n> hardware threads".
std::string host_descriptor();

}  // namespace swinq
