#include "swinq/bench/bench.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "swinq/errors.hpp"
#include "swinq/parallel.hpp"
#include "swinq/train/train.hpp"

namespace swinq {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void check_row(const ReportRow& r) {
  const std::string where = "report row " + r.dataset + "/" + r.method;
  for (double m : {r.accuracy, r.precision, r.recall, r.f1})
    if (!(m >= 0.0 && m <= 1.0)) throw DomainError(where + ": metric outside [0, 1]");
  if (!(r.model_size_mb > 0.0)) throw DomainError(where + ": model size must be positive");
  if (!(r.latency_ms > 0.0) || !(r.fps > 0.0)) throw DomainError(where + ": latency and FPS must be positive");
  if (std::abs(r.fps - 1000.0 / r.latency_ms) / r.fps > 0.005)
    throw DomainError(where + ": FPS is not 1000 / latency");
}

}  // namespace

LatencyStats LatencyStats::from_times(std::size_t warmup, std::vector<double> times_ms) {
  if (times_ms.size() < 10) throw DomainError("latency needs at least 10 measured iterations");
  LatencyStats s;
  s.warmup_iters = warmup;
  s.measured_iters = times_ms.size();
  s.times_ms = std::move(times_ms);
  s.mean_ms = std::accumulate(s.times_ms.begin(), s.times_ms.end(), 0.0) / static_cast<double>(s.measured_iters);
  if (!(s.mean_ms > 0.0)) throw DomainError("mean latency must be positive");
  std::vector<double> sorted = s.times_ms;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median_ms = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  s.p95_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
  s.fps = 1000.0 / s.mean_ms;
  return s;
}

void to_json(nlohmann::json& j, const LatencyStats& s) {
  j = nlohmann::json{{"warmup_iters", s.warmup_iters}, {"measured_iters", s.measured_iters},
                     {"mean_ms", s.mean_ms},           {"median_ms", s.median_ms},
                     {"p95_ms", s.p95_ms},             {"fps", s.fps},
                     {"times_ms", s.times_ms}};
}

void from_json(const nlohmann::json& j, LatencyStats& s) {
  s = LatencyStats::from_times(j.at("warmup_iters").get<std::size_t>(), j.at("times_ms").get<std::vector<double>>());
}

LatencyStats measure_latency(const std::function<void()>& run, std::size_t warmup, std::size_t iters) {
  if (iters < 10) throw DomainError("latency needs at least 10 measured iterations");
  for (std::size_t i = 0; i < warmup; ++i) run();
  std::vector<double> times;
  times.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return LatencyStats::from_times(warmup, std::move(times));
}

LatencyStats measure_latency(const EngineRuntime& runtime, std::span<const float> image, std::size_t warmup,
                             std::size_t iters) {
  volatile float sink = 0.0f;
  return measure_latency([&] { sink = runtime.forward(image)[0]; }, warmup, iters);
}

void to_json(nlohmann::json& j, const ClassificationMetrics& m) {
  j = nlohmann::json{{"accuracy", m.accuracy},
                     {"precision", m.precision},
                     {"recall", m.recall},
                     {"f1", m.f1},
                     {"class_precision", m.class_precision},
                     {"class_recall", m.class_recall},
                     {"class_f1", m.class_f1},
                     {"confusion", m.confusion}};
}

ClassificationMetrics compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                                      std::size_t num_classes) {
  if (predictions.size() != labels.size())
    throw DimensionError("got " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw DimensionError("metrics need at least one prediction");
  ClassificationMetrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes)
      throw DomainError("class index out of range for " + std::to_string(num_classes) + " classes");
    ++m.confusion[labels[i]][predictions[i]];
    correct += labels[i] == predictions[i];
  }
  m.accuracy = ratio(correct, labels.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t support = 0;
    std::size_t predicted = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      support += m.confusion[c][k];
      predicted += m.confusion[k][c];
    }
    const double p = ratio(m.confusion[c][c], predicted);
    const double r = ratio(m.confusion[c][c], support);
    m.class_precision.push_back(p);
    m.class_recall.push_back(r);
    m.class_f1.push_back(p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0);
  }
  const double k = static_cast<double>(num_classes);
  m.precision = std::accumulate(m.class_precision.begin(), m.class_precision.end(), 0.0) / k;
  m.recall = std::accumulate(m.class_recall.begin(), m.class_recall.end(), 0.0) / k;
  m.f1 = std::accumulate(m.class_f1.begin(), m.class_f1.end(), 0.0) / k;
  return m;
}

void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{{"path", p.path}, {"label", p.label}, {"pred", p.pred}, {"logits", p.logits}};
}

Evaluation evaluate(const EngineRuntime& runtime, const std::vector<Sample>& samples, std::size_t threads) {
  if (samples.empty()) throw DataError("evaluation set is empty");
  Evaluation ev;
  ev.predictions.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    Prediction& p = ev.predictions[i];
    p.path = samples[i].path;
    p.label = samples[i].label;
    p.logits = runtime.forward(samples[i].pixels);
    p.pred = argmax(p.logits);
  });
  std::vector<std::size_t> preds, labels;
  for (const auto& p : ev.predictions) {
    preds.push_back(p.pred);
    labels.push_back(p.label);
  }
  ev.metrics = compute_metrics(preds, labels, runtime.config().num_classes);
  return ev;
}

Evaluation evaluate(const EngineRuntime& runtime, const DatasetIndex& index, const PreprocessSpec& spec,
                    std::size_t threads) {
  LoadedSplit split = load_split(index, Split::test, spec, threads);
  Evaluation ev = evaluate(runtime, split.samples, threads);
  ev.failed = std::move(split.failed);
  return ev;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& p : predictions) out << nlohmann::json(p).dump() << '\n';
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

const std::vector<std::string>& report_methods() {
  static const std::vector<std::string> methods{"original", "minmax", "ema",  "omse",         "percentile",
                                                "fqvit",    "int8",   "fp16", "default_range"};
  return methods;
}

void to_json(nlohmann::json& j, const ReportRow& r) {
  j = nlohmann::json{{"dataset", r.dataset},
                     {"method", r.method},
                     {"bits", r.bits},
                     {"accuracy", r.accuracy},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"latency_ms", r.latency_ms},
                     {"fps", r.fps},
                     {"model_size_mb", r.model_size_mb},
                     {"thread_count", r.thread_count},
                     {"host", r.host}};
}

void from_json(const nlohmann::json& j, ReportRow& r) {
  j.at("dataset").get_to(r.dataset);
  j.at("method").get_to(r.method);
  j.at("bits").get_to(r.bits);
  j.at("accuracy").get_to(r.accuracy);
  j.at("precision").get_to(r.precision);
  j.at("recall").get_to(r.recall);
  j.at("f1").get_to(r.f1);
  j.at("latency_ms").get_to(r.latency_ms);
  j.at("fps").get_to(r.fps);
  j.at("model_size_mb").get_to(r.model_size_mb);
  j.at("thread_count").get_to(r.thread_count);
  j.at("host").get_to(r.host);
}

std::vector<ReportRow> order_report(std::vector<ReportRow> rows) {
  if (rows.empty()) throw DomainError("a report needs at least one row");
  const auto& methods = report_methods();
  std::map<std::string, std::size_t> dataset_rank;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      throw DomainError("unknown report method '" + r.method + "'");
    dataset_rank.emplace(r.dataset, dataset_rank.size());
    check_row(r);
  }
  auto key = [&](const ReportRow& r) {
    return std::make_pair(dataset_rank.at(r.dataset),
                          static_cast<std::size_t>(std::find(methods.begin(), methods.end(), r.method) -
                                                   methods.begin()));
  };
  std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (key(rows[i]) == key(rows[i - 1]))
      throw DomainError("duplicate report row " + rows[i].dataset + "/" + rows[i].method);
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "dataset,method,bits,accuracy,precision,recall,f1,latency_ms,fps,model_size_mb,thread_count,host\n";
  for (const auto& r : rows) {
    out << csv_field(r.dataset) << ',' << csv_field(r.method) << ',' << csv_field(r.bits) << ','
        << fixed(r.accuracy, 6) << ',' << fixed(r.precision, 6) << ',' << fixed(r.recall, 6) << ','
        << fixed(r.f1, 6) << ',' << fixed(r.latency_ms, 4) << ',' << fixed(r.fps, 4) << ','
        << fixed(r.model_size_mb, 6) << ',' << r.thread_count << ',' << csv_field(r.host) << '\n';
  }
  return out.str();
}

std::string report_markdown(const std::vector<ReportRow>& rows, const std::vector<std::string>& notes) {
  const std::vector<std::string> header{"Dataset",   "Method (w/a/att)", "Accuracy", "Precision",      "Recall",
                                        "F1-score", "Latency [ms]",     "FPS",      "Model Size [MB]"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({r.dataset, r.method + " " + r.bits, fixed(r.accuracy, 4), fixed(r.precision, 4),
                     fixed(r.recall, 4), fixed(r.f1, 4), fixed(r.latency_ms, 3), fixed(r.fps, 2),
                     fixed(r.model_size_mb, 4)});
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& v) {
    std::string s = "|";
    for (std::size_t c = 0; c < v.size(); ++c) {
      const std::string pad(width[c] - v[c].size(), ' ');
      s += " " + (c < 2 ? v[c] + pad : pad + v[c]) + " |";
    }
    return s + "\n";
  };
  std::string out = line(header);
  out += "|";
  for (std::size_t c = 0; c < header.size(); ++c) out += std::string(width[c] + 1, '-') + (c < 2 ? "-|" : ":|");
  out += "\n";
  for (const auto& row : cells) out += line(row);
  if (!rows.empty())
    out += "\nThreads: " + std::to_string(rows.front().thread_count) + ". Host: " + rows.front().host + ".\n";
  if (!notes.empty()) {
    out += "\nNotes:\n";
    for (const auto& n : notes) out += "- " + n + "\n";
  }
  return out;
}

std::vector<ReportRow> emit_report(const std::vector<ReportRow>& rows, const std::filesystem::path& dir,
                                   const std::vector<std::string>& notes) {
  std::vector<ReportRow> ordered = order_report(rows);
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : {std::pair{"report.csv", report_csv(ordered)},
                                   std::pair{"report.md", report_markdown(ordered, notes)}}) {
    std::ofstream out(dir / name, std::ios::binary);
    out << text;
    if (!out) throw DataError("failed writing '" + (dir / name).string() + "'");
  }
  return ordered;
}

std::string host_descriptor() {
  utsname u{};
  std::string os = "unknown";
  if (uname(&u) == 0) os = std::string(u.sysname) + " " + u.machine;
  return os + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
}

}  // namespace swinq
