#include "swinq/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>

#include "swinq/errors.hpp"
#include "swinq/parallel.hpp"

namespace swinq {

namespace fs = std::filesystem;

PreprocessSpec PreprocessSpec::synthetic(std::size_t size) {
  PreprocessSpec s;
  s.resize_shorter = size;
  s.crop = size;
  s.mean = {0.5f, 0.5f, 0.5f};
  s.std = {0.5f, 0.5f, 0.5f};
  return s;
}

PreprocessSpec PreprocessSpec::imagenet(std::size_t resize_shorter, std::size_t crop) {
  PreprocessSpec s;
  s.resize_shorter = resize_shorter;
  s.crop = crop;
  return s;
}

void PreprocessSpec::validate() const {
  if (crop == 0 || resize_shorter == 0) throw ConfigError("preprocess sizes must be positive");
  if (crop > resize_shorter) throw ConfigError("crop must not exceed resize_shorter");
  for (float s : std)
    if (!(s > 0.0f)) throw ConfigError("preprocess std must be positive");
}

void to_json(nlohmann::json& j, const PreprocessSpec& s) {
  j = nlohmann::json{{"resize_shorter", s.resize_shorter}, {"crop", s.crop}, {"mean", s.mean}, {"std", s.std}};
}

void from_json(const nlohmann::json& j, PreprocessSpec& s) {
  j.at("resize_shorter").get_to(s.resize_shorter);
  j.at("crop").get_to(s.crop);
  j.at("mean").get_to(s.mean);
  j.at("std").get_to(s.std);
  s.validate();
}

Image resize_bilinear(const Image& img, std::size_t width, std::size_t height) {
  if (width == img.width && height == img.height) return img;
  Image out{width, height, std::vector<std::uint8_t>(width * height * 3)};
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  auto px = [&](std::size_t x, std::size_t y, std::size_t c) {
    return static_cast<double>(img.rgb[(y * img.width + x) * 3 + c]);
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = px(x0, y0, c) * (1 - wx) + px(x1, y0, c) * wx;
        const double bot = px(x0, y1, c) * (1 - wx) + px(x1, y1, c) * wx;
        out.rgb[(y * width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::nearbyint(top * (1 - wy) + bot * wy), 0.0, 255.0));
      }
    }
  }
  return out;
}

std::vector<float> preprocess(const Image& img, const PreprocessSpec& spec) {
  spec.validate();
  if (img.width == 0 || img.height == 0 || img.rgb.size() != img.width * img.height * 3)
    throw DataError("cannot preprocess an empty or inconsistent image");
  const std::size_t shorter = std::min(img.width, img.height);
  auto scaled = [&](std::size_t side) {
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(side) * spec.resize_shorter / shorter)));
  };
  const std::size_t w = img.width == shorter ? spec.resize_shorter : scaled(img.width);
  const std::size_t h = img.height == shorter ? spec.resize_shorter : scaled(img.height);
  const Image r = resize_bilinear(img, w, h);
  const std::size_t ox = (w - spec.crop) / 2, oy = (h - spec.crop) / 2;
  std::vector<float> out(spec.crop * spec.crop * 3);
  for (std::size_t y = 0; y < spec.crop; ++y)
    for (std::size_t x = 0; x < spec.crop; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = static_cast<float>(r.rgb[((oy + y) * w + ox + x) * 3 + c]) / 255.0f;
        out[(y * spec.crop + x) * 3 + c] = (v - spec.mean[c]) / spec.std[c];
      }
  return out;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

std::vector<const IndexedSample*> DatasetIndex::split(Split s) const {
  std::vector<const IndexedSample*> out;
  for (const auto& sm : samples)
    if (sm.split == s) out.push_back(&sm);
  return out;
}

void to_json(nlohmann::json& j, const DatasetIndex& idx) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : idx.samples)
    samples.push_back({{"path", s.path}, {"class", s.label}, {"split", to_string(s.split)}});
  j = nlohmann::json{{"seed", idx.seed},       {"root", idx.root},       {"classes", idx.classes},
                     {"samples", samples},     {"skipped", idx.skipped}};
}

void from_json(const nlohmann::json& j, DatasetIndex& idx) {
  j.at("seed").get_to(idx.seed);
  idx.root = j.value("root", std::string{});
  j.at("classes").get_to(idx.classes);
  idx.samples.clear();
  for (const auto& s : j.at("samples")) {
    IndexedSample is{s.at("path").get<std::string>(), s.at("class").get<std::size_t>(),
                     split_from_string(s.at("split").get<std::string>())};
    if (is.label >= idx.classes.size()) throw DataError("manifest sample has class out of range: " + is.path);
    idx.samples.push_back(std::move(is));
  }
  idx.skipped = j.value("skipped", std::vector<std::string>{});
}

std::array<std::size_t, 3> split_counts(std::size_t n) {
  const std::size_t train = n * 7 / 10, val = n * 2 / 10;
  return {train, val, n - train - val};
}

DatasetIndex index_and_split(const fs::path& root, std::uint64_t seed) {
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  DatasetIndex idx;
  idx.root = root.string();
  idx.seed = seed;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) idx.classes.push_back(e.path().filename().string());
  std::sort(idx.classes.begin(), idx.classes.end());
  if (idx.classes.empty()) throw DataError("dataset root " + root.string() + " has no class directories");

  std::vector<std::vector<IndexedSample>> per_class(idx.classes.size());
  for (std::size_t c = 0; c < idx.classes.size(); ++c) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(root / idx.classes[c])) {
      if (!e.is_regular_file() || e.path().extension() != ".ppm") continue;
      files.push_back(e.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::string> readable;
    for (const auto& f : files) {
      const std::string rel = idx.classes[c] + "/" + f;
      try {
        load_image(root / rel);
        readable.push_back(rel);
      } catch (const DataError&) {
        idx.skipped.push_back(rel);
      }
    }
    if (readable.size() < 10)
      throw DataError("class '" + idx.classes[c] + "' has " + std::to_string(readable.size()) +
                      " readable images, at least 10 are required");
    std::vector<std::size_t> order(readable.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + c);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    const auto counts = split_counts(readable.size());
    std::vector<Split> assign(readable.size());
    for (std::size_t k = 0; k < order.size(); ++k)
      assign[order[k]] = k < counts[0] ? Split::train : (k < counts[0] + counts[1] ? Split::val : Split::test);
    for (std::size_t i = 0; i < readable.size(); ++i) per_class[c].push_back({readable[i], c, assign[i]});
  }
  for (std::size_t k = 0;; ++k) {
    bool any = false;
    for (const auto& list : per_class)
      if (k < list.size()) {
        idx.samples.push_back(list[k]);
        any = true;
      }
    if (!any) break;
  }
  return idx;
}

LoadedSplit load_split(const DatasetIndex& index, Split split, const PreprocessSpec& spec, std::size_t threads) {
  const auto members = index.split(split);
  std::vector<std::optional<Sample>> slots(members.size());
  std::vector<std::string> errors(members.size());
  parallel_for(members.size(), threads, [&](std::size_t i) {
    const fs::path p = fs::path(index.root) / members[i]->path;
    try {
      slots[i] = Sample{members[i]->path, preprocess(load_image(p), spec), members[i]->label};
    } catch (const DataError& e) {
      errors[i] = e.what();
    }
  });
  LoadedSplit out;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (slots[i]) {
      out.samples.push_back(std::move(*slots[i]));
    } else {
      out.failed.push_back(errors[i]);
    }
  }
  return out;
}

LoadedSplit calibration_set(const DatasetIndex& index, const PreprocessSpec& spec, std::size_t count) {
  DatasetIndex head = index;
  head.samples.clear();
  for (const auto& s : index.samples)
    if (s.split == Split::train && head.samples.size() < count) head.samples.push_back(s);
  return load_split(head, Split::train, spec);
}

namespace {

std::array<double, 3> hue_rgb(double hue) {
  // HSV with s = 0.7, v = 0.8.
  const double s = 0.7, v = 0.8;
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

Image synthetic_image(std::size_t cls, std::size_t num_classes, std::size_t size, std::uint64_t seed,
                      std::size_t index) {
  std::mt19937_64 rng(seed ^ (0x51d0ull * (cls + 1)) ^ (index * 0x9e3779b97f4a7c15ull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  const auto base = hue_rgb(static_cast<double>(cls) / static_cast<double>(num_classes));
  const double freq = static_cast<double>(cls + 1);
  const double angle = unit(rng) * std::numbers::pi;
  const double phase = unit(rng) * 2.0 * std::numbers::pi;
  const double gain = 0.9 + 0.2 * unit(rng);
  Image img{size, size, std::vector<std::uint8_t>(size * size * 3)};
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double u = (std::cos(angle) * x + std::sin(angle) * y) / static_cast<double>(size);
      const double texture = 0.12 * std::sin(2.0 * std::numbers::pi * freq * u + phase);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] * gain + texture + noise(rng);
        img.rgb[(y * size + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(v * 255.0), 0.0, 255.0));
      }
    }
  return img;
}

std::size_t generate_synthetic(const fs::path& root, const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.per_class < 30) throw ConfigError("synthetic data needs at least 30 images per class");
  if (spec.size == 0) throw ConfigError("synthetic image size must be positive");
  std::size_t written = 0;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    char dir[32];
    std::snprintf(dir, sizeof dir, "class_%02zu", c);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "img_%04zu.ppm", i);
      try {
        save_ppm(root / dir / name, synthetic_image(c, spec.num_classes, spec.size, spec.seed, i));
      } catch (const std::exception& e) {
        throw DataError("cannot write synthetic dataset under " + root.string() + ": " + e.what());
      }
      ++written;
    }
  }
  return written;
}

}  // namespace swinq
