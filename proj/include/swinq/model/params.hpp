#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "swinq/model/config.hpp"
#include "swinq/tensor/archive.hpp"
#include "swinq/tensor/tensor.hpp"

namespace swinq {

enum class ParamRole { projection, bias, norm_scale, norm_shift };

struct ParamSpec {
  std::string name;
  Shape shape;
  ParamRole role;
};

/// Canonical parameter names and shapes, in archive order. Linear weights are
/// [out, in]; the patch projection flattens each patch as (row, col, channel).
std::vector<ParamSpec> param_specs(const ModelConfig& cfg);

/// Exact scalar count implied by `cfg`.
std::size_t param_count(const ModelConfig& cfg);

/// Named f32 weights of a model, ordered as `param_specs`.
class ParameterSet {
 public:
  ParameterSet() = default;

  /// Truncated normal (sigma 0.02, cut at 2 sigma) projections, zero biases,
  /// unit/zero norms. Deterministic per seed.
  static ParameterSet initialize(const ModelConfig& cfg, std::uint64_t seed);
  static ParameterSet zeros(const ModelConfig& cfg);
  /// Checks names, shapes, dtype and finiteness against `cfg`.
  static ParameterSet from_archive(const TensorArchive& archive, const ModelConfig& cfg);

  TensorArchive to_archive() const;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::span<const float> values(const std::string& name) const { return at(name).f32(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }
  std::size_t scalar_count() const;

  bool operator==(const ParameterSet& other) const { return entries_ == other.entries_; }

 private:
  void add(std::string name, Tensor t);

  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parameter values widened to scalar type T, in ParameterSet order.
template <class T>
struct TypedParams {
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<T> values;
  };
  std::vector<Entry> entries;

  static TypedParams from(const ParameterSet& ps) {
    TypedParams out;
    for (const auto& [name, t] : ps.entries()) {
      const auto v = t.f32();
      out.entries.push_back({name, t.shape(), std::vector<T>(v.begin(), v.end())});
    }
    return out;
  }

  /// Same names and shapes, all values zero.
  TypedParams zeros_like() const {
    TypedParams out = *this;
    for (auto& e : out.entries) std::fill(e.values.begin(), e.values.end(), T(0));
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.values.size();
    return n;
  }
};

}  // namespace swinq
