#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "swinq/engine/runtime.hpp"

namespace swinq {

/// Fixed artifact names under one run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path split() const { return root / "split.json"; }
  std::filesystem::path model() const { return root / "model.json"; }
  std::filesystem::path params() const { return root / "params.swta"; }
  std::filesystem::path metrics() const { return root / "metrics.json"; }
  std::filesystem::path run_json() const { return root / "run.json"; }
  std::filesystem::path calibration(const std::string& method) const {
    return root / "calibration" / (method + ".json");
  }
  std::filesystem::path engine(const std::string& label) const { return root / "engines" / (label + ".swqe"); }
  std::filesystem::path predictions(const std::string& row) const {
    return root / "predictions" / (row + ".jsonl");
  }
  std::filesystem::path results(const std::string& row) const { return root / "results" / (row + ".json"); }
  std::filesystem::path latency(const std::string& row) const { return root / "latency" / (row + ".json"); }
  std::filesystem::path report_csv() const { return root / "report.csv"; }
  std::filesystem::path report_md() const { return root / "report.md"; }
};

/// How a report row is produced. Simulated-quantization rows run the
/// fake-quant path and report the fp32 engine size.
struct RowSpec {
  std::string row;
  std::string engine;
  KernelPath path = KernelPath::integer;
  bool simulated = false;
};

/// One entry per report method, in report order.
const std::vector<RowSpec>& row_specs();
const RowSpec& row_spec(const std::string& row);

/// "fp32", "fp16" or "int8-<method>".
std::string engine_label(const PrecisionMode& mode);

/// Runs one subcommand. Returns 0 on success, 1 on a runtime error and 2 on a
/// usage error. `args` excludes the program name.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace swinq
