#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "swinq/bench/bench.hpp"
#include "swinq/cli/cli.hpp"
#include "swinq/engine/engine.hpp"

using namespace swinq;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A small trained run shared by the pipeline cases.
const fs::path& pipeline_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "swinq_cli_pipeline";
    fs::remove_all(d);
    const std::string out = d.string();
    REQUIRE(cli({"--out", out, "synth-data", "--per-class", "30"}).code == 0);
    REQUIRE(cli({"--out", out, "split"}).code == 0);
    REQUIRE(cli({"--out", out, "train", "--epochs", "1"}).code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  CHECK(cli({}).code == 2);
  const auto unknown = cli({"train", "--no-such-flag", "1"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("Usage") != std::string::npos);
  CHECK(cli({"no-such-command"}).code == 2);
  CHECK(cli({"build-engine", "--precision", "int16"}).code == 2);
  CHECK(cli({"build-engine", "--precision", "int8", "--method", "bogus"}).code == 2);
  CHECK(cli({"evaluate"}).code == 2);
  CHECK(cli({"bench", "--row", "int8", "--iters", "5"}).code == 2);
}

TEST_CASE("cli help exits with 0") {
  const auto top = cli({"--help"});
  CHECK(top.code == 0);
  CHECK(top.out.find("ablate") != std::string::npos);
  const auto sub = cli({"build-engine", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("--precision") != std::string::npos);
}

TEST_CASE("cli runtime errors exit with 1") {
  const fs::path d = fs::temp_directory_path() / "swinq_cli_empty";
  fs::remove_all(d);
  fs::create_directories(d);
  const auto r = cli({"--out", d.string(), "evaluate", "--row", "int8"});
  CHECK(r.code == 1);
  CHECK(r.err.find("build-engine") != std::string::npos);
  CHECK(cli({"--out", d.string(), "split", "--data", (d / "missing").string()}).code == 1);
  CHECK(!fs::exists(d / "run.json"));
  fs::remove_all(d);
}

TEST_CASE("row specs cover the report methods") {
  REQUIRE(row_specs().size() == report_methods().size());
  for (std::size_t i = 0; i < row_specs().size(); ++i) CHECK(row_specs()[i].row == report_methods()[i]);
  CHECK(row_spec("int8").engine == "int8-minmax");
  CHECK(row_spec("int8").path == KernelPath::integer);
  CHECK(row_spec("minmax").path == KernelPath::fake_quant);
  CHECK(engine_label(PrecisionMode::int8(CalibrationMethod::omse)) == "int8-omse");
  CHECK(engine_label(PrecisionMode::fp16()) == "fp16");
}

TEST_CASE("build-engine checks the method against the precision") {
  const std::string out = pipeline_dir().string();
  CHECK(cli({"--out", out, "build-engine", "--precision", "int8"}).code == 2);
  CHECK(cli({"--out", out, "build-engine", "--precision", "fp16", "--method", "ema"}).code == 2);
  CHECK(cli({"--out", out, "build-engine", "--precision", "fp16"}).code == 0);
  CHECK(fs::exists(RunLayout{pipeline_dir()}.engine("fp16")));
}

TEST_CASE("calibrate then build-engine from the stored table") {
  const RunLayout run{pipeline_dir()};
  const std::string out = run.root.string();
  REQUIRE(cli({"--out", out, "calibrate", "--method", "percentile", "--calib-count", "8"}).code == 0);
  const auto table = nlohmann::json::parse(slurp(run.calibration("percentile")));
  CHECK(table.at("sample_count") == 8);
  REQUIRE(cli({"--out", out, "build-engine", "--precision", "int8", "--method", "percentile", "--calibration",
               run.calibration("percentile").string()})
              .code == 0);
  const Engine e = load_engine(run.engine("int8-percentile"));
  CHECK(e.mode == PrecisionMode::int8(CalibrationMethod::percentile));
}

TEST_CASE("ablate writes every row and re-runs byte-identically") {
  const RunLayout run{pipeline_dir()};
  const std::string out = run.root.string();
  REQUIRE(cli({"--out", out, "ablate", "--warmup", "0", "--iters", "10"}).code == 0);

  std::ifstream csv(run.report_csv());
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> methods;
  while (std::getline(csv, line)) {
    const auto first = line.find(',') + 1;
    methods.push_back(line.substr(first, line.find(',', first) - first));
  }
  CHECK(methods == report_methods());

  const std::size_t test_size = nlohmann::json::parse(slurp(run.results("int8"))).at("test_images");
  std::ifstream preds(run.predictions("int8"));
  std::size_t lines = 0;
  while (std::getline(preds, line)) ++lines;
  CHECK(lines == test_size);

  const auto engine_bytes = slurp(run.engine("int8-fqvit"));
  const auto results = slurp(run.results("fqvit"));
  const auto calibration = slurp(run.calibration("omse"));
  const auto run_json = nlohmann::json::parse(slurp(run.run_json()));
  CHECK(run_json.at("command") == "ablate");
  CHECK(run_json.at("options").at("iters") == 10);

  // Re-run from run.json with one flag overridden.
  REQUIRE(cli({"--config", run.run_json().string(), "--iters", "11"}).code == 0);
  CHECK(slurp(run.engine("int8-fqvit")) == engine_bytes);
  CHECK(slurp(run.results("fqvit")) == results);
  CHECK(slurp(run.calibration("omse")) == calibration);
  CHECK(nlohmann::json::parse(slurp(run.latency("int8"))).at("measured_iters") == 11);
  CHECK(nlohmann::json::parse(slurp(run.run_json())).at("options").at("iters") == 11);

  CHECK(cli({"--out", out, "--config", run.run_json().string(), "train"}).code == 2);
}
