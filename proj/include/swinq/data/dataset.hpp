#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "swinq/data/image.hpp"
#include "swinq/data/sample.hpp"

namespace swinq {

struct PreprocessSpec {
  std::size_t resize_shorter = 256;
  std::size_t crop = 224;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> std{0.229f, 0.224f, 0.225f};

  /// Identity geometry and (x - 0.5) / 0.5 normalization for generated data.
  static PreprocessSpec synthetic(std::size_t size);
  static PreprocessSpec imagenet(std::size_t resize_shorter = 256, std::size_t crop = 224);
  void validate() const;
  bool operator==(const PreprocessSpec&) const = default;
};

void to_json(nlohmann::json& j, const PreprocessSpec& s);
void from_json(const nlohmann::json& j, PreprocessSpec& s);

/// Bilinear resize (half-pixel centers, edge clamped, no antialiasing).
Image resize_bilinear(const Image& img, std::size_t width, std::size_t height);

/// Shorter side -> resize_shorter, center crop, [0, 1], per-channel normalize.
/// Returns [crop, crop, 3] values.
std::vector<float> preprocess(const Image& img, const PreprocessSpec& spec);

enum class Split : std::uint8_t { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct IndexedSample {
  std::string path;  // relative to the index root
  std::size_t label = 0;
  Split split = Split::train;

  bool operator==(const IndexedSample&) const = default;
};

struct DatasetIndex {
  std::string root;
  std::uint64_t seed = 0;
  std::vector<std::string> classes;
  /// Class-interleaved: the k-th file of each class in turn, so any prefix
  /// of a split covers every class.
  std::vector<IndexedSample> samples;
  std::vector<std::string> skipped;

  std::vector<const IndexedSample*> split(Split s) const;
  bool operator==(const DatasetIndex&) const = default;
};

void to_json(nlohmann::json& j, const DatasetIndex& idx);
void from_json(const nlohmann::json& j, DatasetIndex& idx);

/// Lists `root/<class>/*.ppm`, sorted, and assigns a seeded per-class split of
/// floor(0.7n) train, floor(0.2n) val and the rest test. Unreadable files are
/// skipped and listed. Throws DataError for a missing root, no classes, or a
/// class with fewer than 10 readable images.
DatasetIndex index_and_split(const std::filesystem::path& root, std::uint64_t seed);

/// Counts of (train, val, test) for a class of n images.
std::array<std::size_t, 3> split_counts(std::size_t n);

struct LoadedSplit {
  std::vector<Sample> samples;
  std::vector<std::string> failed;
};

/// Decodes and preprocesses one split in index order. Decode failures are
/// collected rather than thrown.
LoadedSplit load_split(const DatasetIndex& index, Split split, const PreprocessSpec& spec, std::size_t threads = 1);

/// First `count` training images in index order.
LoadedSplit calibration_set(const DatasetIndex& index, const PreprocessSpec& spec, std::size_t count = 32);

struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t per_class = 500;
  std::size_t size = 16;
  std::uint64_t seed = 0;
};

/// Writes `root/class_XX/img_XXXX.ppm`. Class c has hue c/K, a sinusoidal
/// texture whose frequency grows with c, and Gaussian noise of 0.1 of the
/// dynamic range. Deterministic per seed. Returns the number of files.
std::size_t generate_synthetic(const std::filesystem::path& root, const SyntheticSpec& spec);

/// Builds one synthetic image without touching disk.
Image synthetic_image(std::size_t cls, std::size_t num_classes, std::size_t size, std::uint64_t seed,
                      std::size_t index);

}  // namespace swinq
