// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Optional arguments select criteria by name.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "swinq/bench/bench.hpp"
#include "swinq/cli/cli.hpp"
#include "swinq/engine/engine.hpp"
#include "swinq/model/layers.hpp"
#include "swinq/quant/quantize.hpp"
#include "swinq/train/gradcheck.hpp"

using namespace swinq;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

ParameterSet noisy_params(const ModelConfig& cfg, std::uint64_t seed, float spread) {
  ParameterSet ps = ParameterSet::initialize(cfg, seed);
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<float> d(-spread, spread);
  for (auto& [name, t] : ps.entries())
    for (float& v : t.f32()) v += d(rng);
  return ps;
}

std::vector<std::vector<float>> random_images(const ModelConfig& cfg, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<std::vector<float>> out(n, std::vector<float>(cfg.image_size * cfg.image_size * cfg.in_channels));
  for (auto& img : out)
    for (float& v : img) v = u(rng);
  return out;
}

// ---------------------------------------------------------------------------

Outcome param_count_check() {
  const double n = static_cast<double>(param_count(ModelConfig::swin_t()));
  return {n >= 26.5e6 && n <= 29.5e6, "Swin-T preset has " + fmt("%.0f", n) + " parameters, band [26.5e6, 29.5e6]"};
}

Outcome size_ratio_check() {
  bool pass = true;
  std::string detail;
  auto measure = [&](const std::string& name, const ModelConfig& cfg, const PrecisionMode& int8_mode,
                     const std::vector<std::vector<float>>& images) {
    const ParameterSet ps = ParameterSet::initialize(cfg, 1);
    const double fp32 = static_cast<double>(serialize_engine(build_engine(ps, cfg, PrecisionMode::fp32(), {})).size());
    const double fp16 = static_cast<double>(serialize_engine(build_engine(ps, cfg, PrecisionMode::fp16(), {})).size());
    const double int8 = static_cast<double>(serialize_engine(build_engine(ps, cfg, int8_mode, images)).size());
    const double r16 = fp16 / fp32, r8 = int8 / fp32;
    pass = pass && r16 >= 0.45 && r16 <= 0.60 && r8 >= 0.25 && r8 <= 0.40;
    detail += name + " fp16/fp32 " + fmt("%.3f", r16) + ", int8/fp32 " + fmt("%.3f", r8) + " (" +
              fmt("%.2f", fp32 / 1048576.0) + " MB fp32); ";
  };
  const ModelConfig tiny = ModelConfig::tiny();
  measure("tiny", tiny, PrecisionMode::int8(CalibrationMethod::minmax), random_images(tiny, 4, 2));
  measure("Swin-T", ModelConfig::swin_t(), PrecisionMode::int8(CalibrationMethod::default_range), {});
  detail += "bands [0.45, 0.60] and [0.25, 0.40]";
  return {pass, detail};
}

Outcome report_arithmetic_check() {
  const fs::path dir = fs::temp_directory_path() / "swinq_acceptance_report";
  fs::remove_all(dir);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::vector<ReportRow> rows;
  const auto& methods = report_methods();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const double target = i == 0 ? 48.87 : 0.5 + 100.0 * static_cast<double>(i) / 3.0;
    std::vector<double> times(100);
    for (std::size_t k = 0; k < times.size(); ++k) times[k] = target + (k % 2 == 0 ? 1 : -1) * 0.25;
    if (i != 0)
      for (double& t : times) t += jitter(rng) * 0.1;
    const auto stats = LatencyStats::from_times(10, times);
    ReportRow r;
    r.dataset = "synthetic";
    r.method = methods[(i + 4) % methods.size()];
    r.bits = "8/8/8";
    r.accuracy = r.precision = r.recall = r.f1 = 0.9;
    r.latency_ms = stats.mean_ms;
    r.fps = stats.fps;
    r.model_size_mb = 1.0;
    r.host = host_descriptor();
    rows.push_back(r);
  }
  emit_report(rows, dir);
  std::ifstream csv(dir / "report.csv");
  std::string line;
  std::getline(csv, line);
  const auto header = split_line(line, ',');
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  bool identity = true;
  double worst = 0.0, fps_4887 = -1.0;
  std::size_t count = 0;
  while (std::getline(csv, line)) {
    const auto cells = split_line(line, ',');
    const double lat = std::stod(cells[col("latency_ms")]), fps = std::stod(cells[col("fps")]);
    const double rel = std::abs(fps - 1000.0 / lat) / fps;
    worst = std::max(worst, rel);
    identity = identity && rel <= 0.005;
    if (std::abs(lat - 48.87) < 1e-9) fps_4887 = fps;
    ++count;
  }
  fs::remove_all(dir);
  const bool pass = identity && count == methods.size() && std::abs(fps_4887 - 20.46) <= 0.01;
  return {pass, "48.87 ms -> " + fmt("%.4f", fps_4887) + " FPS (20.46 +/- 0.01); worst |fps - 1000/latency|/fps " +
                    fmt("%.2e", worst) + " over " + std::to_string(count) + " rows (<= 0.5%)"};
}

Outcome attention_oracle_check() {
  std::mt19937_64 rng(11);
  double worst_dense = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t heads = 1 + rng() % 4;
    const std::size_t c = heads * (1 + rng() % 6);
    const std::size_t side = 1 + rng() % 7;
    const Tensor x = oracle::random_tensor({side, side, c}, rng, -1, 1);
    const Tensor qw = oracle::random_tensor({3 * c, c}, rng, -0.5, 0.5);
    const Tensor qb = oracle::random_tensor({3 * c}, rng, -0.5, 0.5);
    const Tensor pw = oracle::random_tensor({c, c}, rng, -0.5, 0.5);
    const Tensor pb = oracle::random_tensor({c}, rng, -0.5, 0.5);
    const Tensor y = window_attention(window_partition(x, side), qw, qb, pw, pb, heads, nullptr);
    const auto vec = [](const Tensor& t) { return std::vector<float>(t.f32().begin(), t.f32().end()); };
    const auto ref = oracle::dense_attention(vec(x), side * side, c, heads, vec(qw), vec(qb), vec(pw), vec(pb));
    worst_dense = std::max(worst_dense, oracle::max_abs_diff(ref, y.f32()));
  }

  const ModelConfig cfg = ModelConfig::tiny();
  double worst_shift = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ParameterSet ps = noisy_params(cfg, seed, 0.3f);
    const Tensor x = oracle::random_tensor({8, 8, cfg.embed_dim}, rng, -1, 1);
    const Tensor y = swin_block_pair(x, cfg, ps, 0, 0, 0);
    const StagePlan sp = make_stage_plan(cfg, 0);
    const FloatBackend<float> be(ps);
    std::vector<float> ref(x.f32().begin(), x.f32().end());
    block_forward(be, sp, 0, 0, false, ref);
    block_forward(be, sp, 0, 1, false, ref);
    worst_shift = std::max(worst_shift, oracle::max_abs_diff(ref, y.f32()));
  }
  return {worst_dense <= 1e-5 && worst_shift <= 1e-6,
          "single window vs dense global attention max |diff| " + fmt("%.2e", worst_dense) +
              " over 50 instances (<= 1e-5); shift-0 block pair vs unshifted " + fmt("%.2e", worst_shift) +
              " over 10 instances (<= 1e-6)"};
}

Outcome gradient_check_criterion() {
  const ModelConfig cfg = ModelConfig::tiny();
  const ForwardPlan plan(cfg);
  auto params = TypedParams<double>::from(ParameterSet::initialize(cfg, 1));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (auto& e : params.entries)
    for (double& v : e.values) v += u(rng);
  std::vector<double> image(cfg.image_size * cfg.image_size * cfg.in_channels);
  for (double& v : image) v = u(rng) * 5.0;
  const auto r = gradient_check(image, 1, plan, params, 1e-3, 1e-4);
  return {r.checked == param_count(cfg) && r.max_rel_error <= 1e-3,
          std::to_string(r.checked) + " parameters, max relative error " + fmt("%.2e", r.max_rel_error) + " at " +
              r.worst_param + "[" + std::to_string(r.worst_index) + "] (<= 1e-3)"};
}

Outcome calibrator_check() {
  std::mt19937_64 rng(21);
  std::size_t pct_ok = 0, ema_ok = 0, omse_ok = 0, ema_total = 0;
  const std::vector<QuantScheme> schemes{QuantScheme::affine, QuantScheme::symmetric};
  for (int t = 0; t < 100; ++t) {
    const float spread = std::ldexp(1.0f, static_cast<int>(rng() % 12) - 6);
    const float shift = std::uniform_real_distribution<float>(-spread, spread)(rng);
    std::normal_distribution<float> n(shift, spread);
    std::vector<float> v(1000);
    for (float& x : v) x = n(rng);
    CalibrationStats s;
    observe(s, v);
    const auto scheme = schemes[t % 2];
    pct_ok += calibrate_percentile(s, 8, scheme, 100.0) == calibrate_minmax(s, 8, scheme);
    omse_ok += quantization_mse(v, calibrate_omse(s, v, 8, scheme)) <= quantization_mse(v, calibrate_minmax(s, 8, scheme));

    const float lo = shift - spread, hi = shift + 2 * spread;
    std::uniform_real_distribution<float> inside(lo, hi);
    for (float alpha : {0.0f, 0.5f, 0.9f}) {
      CalibrationStats e;
      for (int b = 0; b < 8; ++b) {
        std::vector<float> batch(64);
        for (float& x : batch) x = inside(rng);
        batch[0] = lo;
        batch[1] = hi;
        std::shuffle(batch.begin(), batch.end(), rng);
        observe(e, batch, alpha);
      }
      ++ema_total;
      ema_ok += calibrate_ema(e, 8, scheme) == calibrate_minmax(e, 8, scheme);
    }
  }
  return {pct_ok == 100 && omse_ok == 100 && ema_ok == ema_total,
          "percentile(100) == minmax " + std::to_string(pct_ok) + "/100; EMA == minmax on constant-range streams " +
              std::to_string(ema_ok) + "/" + std::to_string(ema_total) + " (alpha 0, 0.5, 0.9); OMSE MSE <= minmax " +
              std::to_string(omse_ok) + "/100"};
}

Outcome quantizer_check() {
  std::mt19937_64 rng(31);
  std::size_t checked = 0, bad = 0;
  double worst_excess = 0.0;
  std::uniform_real_distribution<float> scale_dist(-12.0f, 4.0f);
  while (checked < 1000000) {
    QuantParams qp;
    qp.scale = std::exp2(scale_dist(rng));
    if (rng() % 2 == 0) {
      qp.scheme = QuantScheme::affine;
      qp.zero_point = static_cast<std::int32_t>(rng() % 256);
    } else {
      qp.scheme = QuantScheme::symmetric;
    }
    const float lo = dequantize_value(qp.qmin(), qp), hi = dequantize_value(qp.qmax(), qp);
    std::uniform_real_distribution<float> xd(lo, hi);
    for (int i = 0; i < 1000; ++i, ++checked) {
      const float x = xd(rng);
      const float r = dequantize_value(quantize_value(x, qp), qp);
      const float mag = std::max(std::abs(x), std::abs(r));
      const double bound = double(qp.scale) / 2 + double(std::nextafter(mag, INFINITY) - mag);
      const double err = std::abs(double(r) - double(x));
      if (err > bound) ++bad;
      worst_excess = std::max(worst_excess, err / bound);
    }
  }
  std::size_t monotone_bad = 0;
  for (int t = 0; t < 200; ++t) {
    std::normal_distribution<float> n(0.0f, 3.0f);
    std::vector<float> v(1000);
    for (float& x : v) x = n(rng);
    std::sort(v.begin(), v.end());
    const auto qp = params_for_range(-2.0f, 2.5f, 8, t % 2 == 0 ? QuantScheme::affine : QuantScheme::symmetric);
    for (std::size_t i = 1; i < v.size(); ++i) monotone_bad += quantize_value(v[i - 1], qp) > quantize_value(v[i], qp);
    std::vector<float> p(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::exp(-std::abs(v[v.size() - 1 - i]));
    std::sort(p.begin(), p.end());
    for (std::size_t i = 1; i < p.size(); ++i) monotone_bad += log2_level(p[i - 1], 4) < log2_level(p[i], 4);
  }
  const bool log2_ok = log2_level(1.0f, 4) == 0 && log2_level(0.5f, 4) == 1 && log2_level(0.3f, 4) == 2;
  return {bad == 0 && monotone_bad == 0 && log2_ok,
          std::to_string(checked) + " round trips, " + std::to_string(bad) + " outside scale/2 + 1 ulp (worst " +
              fmt("%.3f", worst_excess) + " of the bound); " + std::to_string(monotone_bad) +
              " monotonicity violations; log2 {1.0, 0.5, 0.3} -> {" + std::to_string(log2_level(1.0f, 4)) + ", " +
              std::to_string(log2_level(0.5f, 4)) + ", " + std::to_string(log2_level(0.3f, 4)) + "}"};
}

Outcome kernel_equivalence_check() {
  const ModelConfig cfg = ModelConfig::tiny();
  const ParameterSet ps = noisy_params(cfg, 41, 0.3f);
  const auto calib = random_images(cfg, 8, 42);
  const auto images = random_images(cfg, 20, 43);
  std::size_t identical = 0, total = 0;
  std::string mismatched;
  for (auto m : {CalibrationMethod::minmax, CalibrationMethod::ema, CalibrationMethod::percentile,
                 CalibrationMethod::omse, CalibrationMethod::fqvit, CalibrationMethod::default_range}) {
    const Engine e = build_engine(ps, cfg, PrecisionMode::int8(m), calib);
    const EngineRuntime integer(e, KernelPath::integer), fake(e, KernelPath::fake_quant);
    std::size_t method_ok = 0;
    for (const auto& img : images) {
      const auto a = integer.forward(img), b = fake.forward(img);
      method_ok += std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
      ++total;
    }
    identical += method_ok;
    if (method_ok != images.size()) mismatched += " " + to_string(m);
  }
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " images bit-identical across 6 methods" +
                                  (mismatched.empty() ? "" : ", mismatches in" + mismatched)};
}

// Full CLI pipeline, shared by the end-to-end and determinism criteria.

struct Pipeline {
  fs::path dir;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  std::map<std::string, std::string> files;
};

Pipeline run_pipeline(const fs::path& dir) {
  Pipeline p;
  p.dir = dir;
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string out = dir.string();
  const std::vector<std::vector<std::string>> steps{
      {"--out", out, "--seed", "7", "synth-data", "--classes", "4", "--per-class", "500", "--size", "16"},
      {"--out", out, "--seed", "7", "split"},
      {"--out", out, "--seed", "7", "train", "--epochs", "20"},
      {"--out", out, "--seed", "7", "ablate"},
  };
  std::ostringstream log, err;
  for (const auto& s : steps) {
    if (cli_dispatch(s, log, err) != 0) {
      p.error = "`" + s[4] + "` failed: " + err.str();
      return p;
    }
  }
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) p.files[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  p.ok = true;
  return p;
}

/// Report text without the latency and FPS columns.
std::string strip_timing(const std::string& name, const std::string& text) {
  std::stringstream in(text);
  std::string line, out;
  const bool csv = name.ends_with(".csv");
  while (std::getline(in, line)) {
    const auto cells = split_line(line, csv ? ',' : '|');
    if (csv || (cells.size() > 9 && line.starts_with("|"))) {
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (i != 7 && i != 8) out += cells[i] + "\x1f";
    } else {
      out += line;
    }
    out += "\n";
  }
  return out;
}

std::vector<std::size_t> predictions_of(const Pipeline& p, const std::string& row) {
  std::vector<std::size_t> preds;
  std::stringstream in(p.files.at("predictions/" + row + ".jsonl"));
  std::string line;
  while (std::getline(in, line)) preds.push_back(json::parse(line).at("pred").get<std::size_t>());
  return preds;
}

Outcome e2e_check(const Pipeline& p) {
  if (!p.ok) return {false, p.error};
  auto accuracy = [&](const std::string& row) {
    return json::parse(p.files.at("results/" + row + ".json")).at("metrics").at("accuracy").get<double>();
  };
  const double fp32 = accuracy("original");
  bool pass = fp32 >= 0.90;
  std::string detail = "fp32 test accuracy " + fmt("%.4f", fp32) + " (>= 0.90)";
  for (const std::string row : {"minmax", "ema", "omse", "percentile", "int8"}) {
    const double a = accuracy(row);
    pass = pass && std::abs(a - fp32) * 100.0 <= 2.0;
    detail += ", " + row + " " + fmt("%.4f", a);
  }
  const double fp16 = accuracy("fp16");
  pass = pass && std::abs(fp16 - fp32) * 100.0 <= 0.5;
  detail += ", fp16 " + fmt("%.4f", fp16) + " (int8 within 2.0 pts, fp16 within 0.5)";
  const auto ref = predictions_of(p, "original");
  double worst_agree = 1.0;
  for (const std::string row : {"minmax", "ema", "omse", "percentile", "int8"}) {
    const auto q = predictions_of(p, row);
    std::size_t same = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) same += ref[i] == q[i];
    worst_agree = std::min(worst_agree, static_cast<double>(same) / static_cast<double>(ref.size()));
  }
  pass = pass && worst_agree >= 0.98;
  detail += "; lowest fp32/int8 top-1 agreement " + fmt("%.4f", worst_agree) + " over " +
            std::to_string(ref.size()) + " test images (>= 0.98)";
  return {pass, detail};
}

Outcome determinism_check(const Pipeline& a, const Pipeline& b) {
  if (!a.ok) return {false, a.error};
  if (!b.ok) return {false, b.error};
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& [name, bytes] : a.files) {
    if (name.starts_with("latency/")) continue;
    const auto it = b.files.find(name);
    if (it == b.files.end()) {
      diffs.push_back(name + " missing");
      continue;
    }
    const bool report = name == "report.csv" || name == "report.md";
    const bool same = report ? strip_timing(name, bytes) == strip_timing(name, it->second) : bytes == it->second;
    if (!same) diffs.push_back(name);
    ++compared;
  }
  if (b.files.size() != a.files.size()) diffs.push_back("file count differs");
  std::size_t engines = 0;
  for (const auto& [name, bytes] : a.files) engines += name.starts_with("engines/");
  std::string detail = std::to_string(compared) + " artifacts compared (" + std::to_string(engines) +
                       " engines, manifests, calibration tables, predictions, metrics, reports without timing)";
  if (!diffs.empty()) detail += "; differing:";
  for (std::size_t i = 0; i < std::min<std::size_t>(diffs.size(), 5); ++i) detail += " " + diffs[i];
  return {diffs.empty() && engines == 8, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  const fs::path work = fs::temp_directory_path() / "swinq_acceptance";
  std::optional<Pipeline> first, second;
  // Both runs share one directory; each is snapshotted in memory.
  auto pipeline = [&](std::optional<Pipeline>& slot, const std::string& name) -> const Pipeline& {
    if (!slot) slot = run_pipeline(work / name);
    return *slot;
  };

  struct Criterion {
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  // Determinism is charged with both pipeline runs.
  const std::vector<Criterion> criteria{
      {"param-count", 1, param_count_check},
      {"size-ratio", 30, size_ratio_check},
      {"report-arithmetic", 1, report_arithmetic_check},
      {"attention-oracle", 30, attention_oracle_check},
      {"gradient-check", 120, gradient_check_criterion},
      {"e2e-degradation", 600, [&] { return e2e_check(pipeline(first, "run")); }},
      {"calibrator-properties", 10, calibrator_check},
      {"quantizer-bounds", 10, quantizer_check},
      {"kernel-equivalence", 60, kernel_equivalence_check},
      {"determinism", 900, [&] { return determinism_check(pipeline(first, "run"), pipeline(second, "run")); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.name == "determinism" && first) seconds = first->seconds + (second ? second->seconds : 0.0);
    const bool in_time = seconds <= c.budget_s;
    if (!in_time) o.detail += "; over the time budget";
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %s: %s [%.2f s, budget %.0f s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                seconds, c.budget_s);
    std::fflush(stdout);
  }
  fs::remove_all(work);
  return failures == 0 ? 0 : 1;
}
