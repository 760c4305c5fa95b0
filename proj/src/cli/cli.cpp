#include "swinq/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "swinq/bench/bench.hpp"
#include "swinq/data/dataset.hpp"
#include "swinq/engine/engine.hpp"
#include "swinq/errors.hpp"
#include "swinq/train/train.hpp"

namespace swinq {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double kBytesPerMb = 1024.0 * 1024.0;

json read_json(const fs::path& path, const std::string& produced_by) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing " + path.string() + " (run `" + produced_by + "` first)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

struct ModelFile {
  ModelConfig config;
  PreprocessSpec preprocess;
};

struct Context {
  RunLayout layout;
  std::size_t threads = 1;
  std::ostream* log = nullptr;

  DatasetIndex index() const { return read_json(layout.split(), "split").get<DatasetIndex>(); }
  ModelFile model() const {
    const json j = read_json(layout.model(), "train");
    ModelFile m{j.at("config").get<ModelConfig>(), j.at("preprocess").get<PreprocessSpec>()};
    m.config.validate();
    m.preprocess.validate();
    return m;
  }
  ParameterSet params(const ModelConfig& cfg) const {
    if (!fs::exists(layout.params())) throw DataError("missing " + layout.params().string() + " (run `train` first)");
    return ParameterSet::from_archive(archive_load(layout.params()), cfg);
  }
};

std::vector<std::vector<float>> pixels_of(std::vector<Sample>&& samples) {
  std::vector<std::vector<float>> out;
  out.reserve(samples.size());
  for (auto& s : samples) out.push_back(std::move(s.pixels));
  return out;
}

CalibrationTable run_calibration(const Context& ctx, const ParameterSet& params, const ModelFile& model,
                                 CalibrationMethod method, std::size_t count, const CalibrationOptions& options) {
  std::vector<std::vector<float>> images;
  if (method != CalibrationMethod::default_range) {
    LoadedSplit set = calibration_set(ctx.index(), model.preprocess, count);
    for (const auto& f : set.failed) *ctx.log << "warning: skipped unreadable calibration image " << f << '\n';
    images = pixels_of(std::move(set.samples));
  }
  CalibrationTable table = calibrate(params, model.config, method, images, options);
  write_json(ctx.layout.calibration(to_string(method)), table);
  *ctx.log << "calibrated " << to_string(method) << " on " << table.sample_count << " images, "
           << table.sites.size() << " sites";
  if (!table.warnings.empty()) *ctx.log << ", " << table.warnings.size() << " warnings";
  *ctx.log << '\n';
  return table;
}

Engine make_engine(const Context& ctx, const ParameterSet& params, const ModelFile& model, const PrecisionMode& mode,
                   std::size_t calib_count, const CalibrationOptions& options, const std::string& table_path) {
  Engine engine;
  if (mode.precision == Precision::int8) {
    const CalibrationTable table =
        table_path.empty() ? run_calibration(ctx, params, model, *mode.method, calib_count, options)
                           : read_json(table_path, "calibrate").get<CalibrationTable>();
    engine = build_engine_from_table(params, model.config, mode, table);
  } else {
    engine = build_engine(params, model.config, mode, {});
  }
  save_engine(engine, ctx.layout.engine(engine_label(mode)));
  *ctx.log << "built " << engine_label(mode) << " engine, " << engine_size_mb(engine) << " MB\n";
  return engine;
}

Engine load_row_engine(const Context& ctx, const RowSpec& spec) {
  const fs::path path = ctx.layout.engine(spec.engine);
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run `build-engine` first)");
  return load_engine(path);
}

double row_size_mb(const Context& ctx, const RowSpec& spec) {
  const fs::path path = ctx.layout.engine(spec.simulated ? "fp32" : spec.engine);
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run `build-engine` first)");
  return static_cast<double>(fs::file_size(path)) / kBytesPerMb;
}

void evaluate_row(const Context& ctx, const std::string& row) {
  const RowSpec& spec = row_spec(row);
  const Engine engine = load_row_engine(ctx, spec);
  const ModelFile model = ctx.model();
  if (!(engine.config == model.config)) throw DataError("engine " + spec.engine + " was built for another model");
  const EngineRuntime runtime(engine, spec.path);
  const Evaluation ev = evaluate(runtime, ctx.index(), model.preprocess, ctx.threads);
  write_predictions(ctx.layout.predictions(row), ev.predictions);
  write_json(ctx.layout.results(row), json{{"row", row},
                                           {"engine", spec.engine},
                                           {"kernel_path", to_string(spec.path)},
                                           {"bits", engine.mode.bits_label()},
                                           {"model_size_mb", row_size_mb(ctx, spec)},
                                           {"test_images", ev.predictions.size()},
                                           {"failed", ev.failed},
                                           {"metrics", ev.metrics}});
  *ctx.log << "evaluated " << row << ": accuracy " << ev.metrics.accuracy << ", macro F1 " << ev.metrics.f1 << " on "
           << ev.predictions.size() << " images\n";
}

void bench_row(const Context& ctx, const std::string& row, std::size_t warmup, std::size_t iters) {
  const RowSpec& spec = row_spec(row);
  const EngineRuntime runtime(load_row_engine(ctx, spec), spec.path);
  const ModelFile model = ctx.model();
  LoadedSplit test = load_split(ctx.index(), Split::test, model.preprocess, ctx.threads);
  if (test.samples.empty()) throw DataError("test split has no readable images");
  const LatencyStats stats = measure_latency(runtime, test.samples.front().pixels, warmup, iters);
  json j = stats;
  j["row"] = row;
  j["kernel_path"] = to_string(spec.path);
  j["thread_count"] = 1;
  write_json(ctx.layout.latency(row), j);
  *ctx.log << "bench " << row << ": " << stats.mean_ms << " ms mean, " << stats.fps << " FPS\n";
}

std::vector<ReportRow> write_report(const Context& ctx, const std::string& dataset) {
  std::vector<ReportRow> rows;
  std::vector<std::string> notes;
  std::set<std::string> noted_methods;
  const std::string host = host_descriptor();
  for (const auto& spec : row_specs()) {
    if (!fs::exists(ctx.layout.results(spec.row))) continue;
    const json res = read_json(ctx.layout.results(spec.row), "evaluate");
    const json lat = read_json(ctx.layout.latency(spec.row), "bench --row " + spec.row);
    ReportRow r;
    r.dataset = dataset;
    r.method = spec.row;
    r.bits = res.at("bits").get<std::string>();
    const json& m = res.at("metrics");
    r.accuracy = m.at("accuracy").get<double>();
    r.precision = m.at("precision").get<double>();
    r.recall = m.at("recall").get<double>();
    r.f1 = m.at("f1").get<double>();
    r.latency_ms = lat.at("mean_ms").get<double>();
    r.fps = lat.at("fps").get<double>();
    r.model_size_mb = res.at("model_size_mb").get<double>();
    r.thread_count = lat.at("thread_count").get<std::size_t>();
    r.host = host;
    rows.push_back(r);

    const auto failed = res.at("failed").get<std::vector<std::string>>();
    if (!failed.empty())
      notes.push_back(spec.row + ": " + std::to_string(failed.size()) + " test images failed to decode");
    const auto dash = spec.engine.find('-');
    if (dash == std::string::npos) continue;
    const std::string method = spec.engine.substr(dash + 1);
    if (!noted_methods.insert(method).second || !fs::exists(ctx.layout.calibration(method))) continue;
    const auto table = read_json(ctx.layout.calibration(method), "calibrate").get<CalibrationTable>();
    for (const auto& w : table.warnings) notes.push_back(method + " calibration: " + w);
  }
  if (rows.empty()) throw DataError("no evaluated rows under " + ctx.layout.root.string() + " (run `evaluate` first)");
  auto ordered = emit_report(rows, ctx.layout.root, notes);
  *ctx.log << "wrote " << ctx.layout.report_csv().string() << " with " << ordered.size() << " rows\n";
  return ordered;
}

/// A subcommand plus the resolved values it echoes into run.json.
struct Command {
  CLI::App* app = nullptr;
  std::vector<std::pair<std::string, std::function<json()>>> recorded;
  std::function<void()> run;

  template <class T>
  CLI::Option* option(const std::string& name, T& var, const std::string& desc) {
    recorded.emplace_back(name, [&var] { return json(var); });
    return app->add_option("--" + name, var, desc)->capture_default_str();
  }
};

std::string json_arg(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

const std::set<std::string> kGlobalValued{"--out", "--seed", "--threads", "--config"};

/// Index of the subcommand token, skipping global options and their values.
std::optional<std::size_t> command_position(const std::vector<std::string>& args,
                                            const std::set<std::string>& commands) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (commands.count(a)) return i;
    if (a.find('=') == std::string::npos && kGlobalValued.count(a)) ++i;
  }
  return std::nullopt;
}

std::optional<std::string> config_arg(const std::vector<std::string>& args) {
  std::optional<std::string> found;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) found = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) found = args[i].substr(9);
  }
  return found;
}

/// Places the options of a run.json right after the subcommand, ahead of the
/// explicit flags.
std::vector<std::string> inject_config(std::vector<std::string> args, const std::set<std::string>& commands) {
  const auto path = config_arg(args);
  if (!path) return args;
  const json j = read_json(*path, "any subcommand");
  if (!j.is_object() || !j.contains("command") || !j.contains("options"))
    throw UsageError(*path + " is not a run.json (needs \"command\" and \"options\")");
  const std::string command = j.at("command").get<std::string>();
  auto pos = command_position(args, commands);
  if (!pos) {
    args.insert(args.begin(), command);
    pos = 0;
  } else if (args[*pos] != command) {
    throw UsageError(*path + " configures `" + command + "`, not `" + args[*pos] + "`");
  }
  std::vector<std::string> merged{command};
  for (const auto& [key, value] : j.at("options").items()) {
    if (key == "config") continue;
    merged.push_back("--" + key);
    merged.push_back(json_arg(value));
  }
  for (std::size_t i = 0; i < args.size(); ++i)
    if (i != *pos) merged.push_back(args[i]);
  return merged;
}

}  // namespace

const std::vector<RowSpec>& row_specs() {
  static const std::vector<RowSpec> specs{
      {"original", "fp32", KernelPath::integer, false},
      {"minmax", "int8-minmax", KernelPath::fake_quant, true},
      {"ema", "int8-ema", KernelPath::fake_quant, true},
      {"omse", "int8-omse", KernelPath::fake_quant, true},
      {"percentile", "int8-percentile", KernelPath::fake_quant, true},
      {"fqvit", "int8-fqvit", KernelPath::fake_quant, true},
      {"int8", "int8-minmax", KernelPath::integer, false},
      {"fp16", "fp16", KernelPath::integer, false},
      {"default_range", "int8-default_range", KernelPath::integer, false},
  };
  return specs;
}

const RowSpec& row_spec(const std::string& row) {
  for (const auto& s : row_specs())
    if (s.row == row) return s;
  throw ConfigError("unknown report row '" + row + "'");
}

std::string engine_label(const PrecisionMode& mode) {
  if (mode.precision != Precision::int8) return to_string(mode.precision);
  return "int8-" + to_string(*mode.method);
}

int cli_dispatch(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantized shifted-window vision transformer toolkit", "swinq"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string out_dir = "run";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string config_path;
  app.add_option("--out", out_dir, "Run directory")->envname("SWINQ_OUT")->capture_default_str();
  app.add_option("--seed", seed, "Seed for data, splits, initialization and shuffling")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for data loading, training and evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--config", config_path, "run.json of an earlier run; explicit flags override it");

  std::map<std::string, Command> commands;
  auto add = [&](const std::string& name, const std::string& desc) -> Command& {
    Command& c = commands[name];
    c.app = app.add_subcommand(name, desc);
    c.recorded.emplace_back("out", [&] { return json(out_dir); });
    c.recorded.emplace_back("seed", [&] { return json(seed); });
    c.recorded.emplace_back("threads", [&] { return json(threads); });
    return c;
  };
  Context ctx;
  ctx.log = &out;
  std::vector<std::string> method_names;
  for (auto m : {CalibrationMethod::minmax, CalibrationMethod::ema, CalibrationMethod::percentile,
                 CalibrationMethod::omse, CalibrationMethod::fqvit, CalibrationMethod::default_range})
    method_names.push_back(to_string(m));
  const auto is_method = CLI::IsMember(method_names);
  const auto is_row = CLI::IsMember(report_methods());

  // synth-data
  std::size_t classes = 4, per_class = 500, synth_size = 16;
  std::string data_dir;
  {
    Command& c = add("synth-data", "Generate the seeded synthetic image-classification set");
    c.option("classes", classes, "Number of classes");
    c.option("per-class", per_class, "Images per class");
    c.option("size", synth_size, "Image side in pixels");
    c.option("data", data_dir, "Output directory (default <out>/data)");
    c.run = [&] {
      const fs::path root = data_dir.empty() ? ctx.layout.data() : fs::path(data_dir);
      const std::size_t n = generate_synthetic(root, SyntheticSpec{classes, per_class, synth_size, seed});
      out << "wrote " << n << " images to " << root.string() << '\n';
    };
  }

  // split
  {
    Command& c = add("split", "Index a class-per-directory dataset and assign the train/val/test split");
    c.option("data", data_dir, "Dataset root (default <out>/data)");
    c.run = [&] {
      const fs::path root = fs::absolute(data_dir.empty() ? ctx.layout.data() : fs::path(data_dir));
      const DatasetIndex index = index_and_split(root.lexically_normal(), seed);
      write_json(ctx.layout.split(), index);
      out << "indexed " << index.samples.size() << " images in " << index.classes.size() << " classes: "
          << index.split(Split::train).size() << " train, " << index.split(Split::val).size() << " val, "
          << index.split(Split::test).size() << " test\n";
      for (const auto& s : index.skipped) out << "warning: skipped " << s << '\n';
    };
  }

  // train
  std::string model_name = "tiny", preprocess_name = "synthetic";
  TrainConfig tc;
  {
    Command& c = add("train", "Train the classifier on the train split, keeping the best validation epoch");
    c.option("model", model_name, "Architecture preset")->check(CLI::IsMember({"tiny", "swin-t"}));
    c.option("preprocess", preprocess_name, "Preprocessing preset")->check(CLI::IsMember({"synthetic", "imagenet"}));
    c.option("epochs", tc.epochs, "Epoch budget");
    c.option("batch-size", tc.batch_size, "Mini-batch size");
    c.option("lr", tc.learning_rate, "Adam learning rate");
    c.run = [&] {
      const DatasetIndex index = ctx.index();
      ModelFile model;
      model.config = model_name == "tiny" ? ModelConfig::tiny() : ModelConfig::swin_t();
      model.config.num_classes = index.classes.size();
      model.config.validate();
      const std::size_t side = model.config.image_size;
      model.preprocess = preprocess_name == "synthetic" ? PreprocessSpec::synthetic(side)
                                                        : PreprocessSpec::imagenet(side * 256 / 224, side);
      tc.seed = seed;
      tc.threads = threads;
      tc.validate();
      const LoadedSplit train = load_split(index, Split::train, model.preprocess, threads);
      const LoadedSplit val = load_split(index, Split::val, model.preprocess, threads);
      const LoadedSplit test = load_split(index, Split::test, model.preprocess, threads);
      for (const auto* s : {&train, &val, &test})
        for (const auto& f : s->failed) out << "warning: skipped unreadable image " << f << '\n';
      const TrainResult result = train_loop(train.samples, val.samples, model.config, tc, [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << ": train loss " << m.train_loss << ", val loss " << m.val_loss
            << ", val accuracy " << m.val_accuracy << '\n';
      });
      const FloatEvaluation test_eval = evaluate_float(test.samples, model.config, result.params, threads);
      write_json(ctx.layout.model(), json{{"config", model.config}, {"preprocess", model.preprocess}});
      archive_save(result.params.to_archive(), ctx.layout.params());
      write_json(ctx.layout.metrics(), json{{"train_config", tc},
                                            {"history", result.history},
                                            {"best_epoch", result.best_epoch},
                                            {"best_val_accuracy", result.best_val_accuracy},
                                            {"test_accuracy", test_eval.accuracy},
                                            {"test_loss", test_eval.mean_loss}});
      out << "best epoch " << result.best_epoch << ", test accuracy " << test_eval.accuracy << '\n';
    };
  }

  // calibrate
  std::string method_name;
  std::size_t calib_count = 32;
  CalibrationOptions calib_options;
  auto add_calibration_options = [&](Command& c) {
    c.option("calib-count", calib_count, "Calibration images taken from the train split")->check(CLI::PositiveNumber);
    c.option("ema-alpha", calib_options.ema_alpha, "EMA smoothing factor")->check(CLI::Range(0.0, 1.0));
    c.option("percentile", calib_options.percentile, "Percentile clip")->check(CLI::Range(50.0, 100.0));
  };
  {
    Command& c = add("calibrate", "Collect activation ranges and write calibration/<method>.json");
    c.option("method", method_name, "Calibration method")->required()->check(is_method);
    add_calibration_options(c);
    c.run = [&] {
      const ModelFile model = ctx.model();
      run_calibration(ctx, ctx.params(model.config), model, calibration_method_from_string(method_name), calib_count,
                      calib_options);
    };
  }

  // build-engine
  std::string precision_name, table_path;
  {
    Command& c = add("build-engine", "Commit the trained weights to one precision and write engines/<label>.swqe");
    c.option("precision", precision_name, "Target precision")->required()->check(CLI::IsMember({"fp32", "fp16", "int8"}));
    c.option("method", method_name, "Calibration method (int8 only)")->check(is_method);
    c.option("calibration", table_path, "Use this calibration table instead of calibrating");
    add_calibration_options(c);
    c.run = [&] {
      const Precision p = precision_from_string(precision_name);
      if (p == Precision::int8 && method_name.empty()) throw UsageError("--precision int8 needs --method");
      if (p != Precision::int8 && !method_name.empty()) throw UsageError("--method only applies to --precision int8");
      if (p != Precision::int8 && !table_path.empty()) throw UsageError("--calibration only applies to --precision int8");
      const PrecisionMode mode = p == Precision::int8 ? PrecisionMode::int8(calibration_method_from_string(method_name))
                                 : p == Precision::fp16 ? PrecisionMode::fp16()
                                                        : PrecisionMode::fp32();
      const ModelFile model = ctx.model();
      make_engine(ctx, ctx.params(model.config), model, mode, calib_count, calib_options, table_path);
    };
  }

  // evaluate
  std::string row;
  {
    Command& c = add("evaluate", "Run the test split through one report row's engine");
    c.option("row", row, "Report row")->required()->check(is_row);
    c.run = [&] { evaluate_row(ctx, row); };
  }

  // bench
  std::size_t warmup = 10, iters = 100;
  auto add_latency_options = [&](Command& c) {
    c.option("warmup", warmup, "Untimed warmup inferences");
    c.option("iters", iters, "Timed inferences (at least 10)")->check(CLI::Range(std::size_t{10}, std::size_t{1} << 30));
  };
  {
    Command& c = add("bench", "Measure single-image latency of one report row");
    c.option("row", row, "Report row")->required()->check(is_row);
    add_latency_options(c);
    c.run = [&] { bench_row(ctx, row, warmup, iters); };
  }

  // report
  std::string dataset = "synthetic";
  {
    Command& c = add("report", "Collect evaluated and benchmarked rows into report.csv and report.md");
    c.option("dataset", dataset, "Dataset name for the report");
    c.run = [&] { write_report(ctx, dataset); };
  }

  // ablate
  {
    Command& c = add("ablate", "Build, evaluate and benchmark every report row, then write the report");
    c.option("dataset", dataset, "Dataset name for the report");
    add_calibration_options(c);
    add_latency_options(c);
    c.run = [&] {
      const ModelFile model = ctx.model();
      const ParameterSet params = ctx.params(model.config);
      std::set<std::string> built;
      for (const auto& spec : row_specs()) {
        if (!built.insert(spec.engine).second) continue;
        PrecisionMode mode = spec.engine == "fp32"   ? PrecisionMode::fp32()
                             : spec.engine == "fp16" ? PrecisionMode::fp16()
                                                     : PrecisionMode::int8(calibration_method_from_string(
                                                           spec.engine.substr(spec.engine.find('-') + 1)));
        make_engine(ctx, params, model, mode, calib_count, calib_options, {});
      }
      for (const auto& spec : row_specs()) evaluate_row(ctx, spec.row);
      for (const auto& spec : row_specs()) bench_row(ctx, spec.row, warmup, iters);
      write_report(ctx, dataset);
    };
  }

  try {
    std::set<std::string> names;
    for (const auto& [name, c] : commands) names.insert(name);
    std::vector<std::string> args = inject_config(raw_args, names);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  for (auto& [name, c] : commands) {
    if (!c.app->parsed()) continue;
    ctx.layout.root = out_dir;
    ctx.threads = threads;
    try {
      json options = json::object();
      for (const auto& [key, get] : c.recorded) options[key] = get();
      c.run();
      write_json(ctx.layout.run_json(), json{{"command", name}, {"options", options}});
      return 0;
    } catch (const UsageError& e) {
      err << "usage error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace swinq
