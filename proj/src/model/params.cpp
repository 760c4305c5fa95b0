#include "swinq/model/params.hpp"

#include <cmath>
#include <random>

#include "swinq/errors.hpp"

namespace swinq {

namespace {

void add_linear(std::vector<ParamSpec>& out, const std::string& name, std::size_t in, std::size_t outd,
                bool bias = true) {
  out.push_back({name + ".weight", {outd, in}, ParamRole::projection});
  if (bias) out.push_back({name + ".bias", {outd}, ParamRole::bias});
}

void add_norm(std::vector<ParamSpec>& out, const std::string& name, std::size_t c) {
  out.push_back({name + ".weight", {c}, ParamRole::norm_scale});
  out.push_back({name + ".bias", {c}, ParamRole::norm_shift});
}

}  // namespace

std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  add_linear(specs, "patch_embed", cfg.patch_dim(), cfg.embed_dim);
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    const std::size_t c = cfg.stage_dim(s);
    const std::size_t hidden = cfg.hidden_dim(s);
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) {
      const std::string p = block_prefix(s, b);
      add_norm(specs, p + ".ln1", c);
      add_linear(specs, p + ".qkv", c, 3 * c);
      add_linear(specs, p + ".proj", c, c);
      add_norm(specs, p + ".ln2", c);
      add_linear(specs, p + ".mlp1", c, hidden);
      add_linear(specs, p + ".mlp2", hidden, c);
    }
    if (s + 1 < cfg.num_stages()) {
      add_norm(specs, merge_prefix(s) + ".norm", 4 * c);
      add_linear(specs, merge_prefix(s) + ".reduce", 4 * c, 2 * c, /*bias=*/false);
    }
  }
  specs.push_back({"final_norm.gamma", {cfg.final_dim()}, ParamRole::norm_scale});
  specs.push_back({"final_norm.beta", {cfg.final_dim()}, ParamRole::norm_shift});
  add_linear(specs, "head", cfg.final_dim(), cfg.num_classes);
  return specs;
}

std::size_t param_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& spec : param_specs(cfg)) n += shape_numel(spec.shape);
  return n;
}

void ParameterSet::add(std::string name, Tensor t) {
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(t));
}

ParameterSet ParameterSet::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  ParameterSet ps;
  for (const auto& spec : param_specs(cfg)) {
    std::vector<float> v(shape_numel(spec.shape), 0.0f);
    switch (spec.role) {
      case ParamRole::projection:
        for (float& x : v) {
          do {
            x = normal(rng);
          } while (std::abs(x) > 0.04f);
        }
        break;
      case ParamRole::norm_scale:
        std::fill(v.begin(), v.end(), 1.0f);
        break;
      case ParamRole::bias:
      case ParamRole::norm_shift:
        break;
    }
    ps.add(spec.name, Tensor::from_f32(spec.shape, std::move(v)));
  }
  return ps;
}

ParameterSet ParameterSet::zeros(const ModelConfig& cfg) {
  ParameterSet ps;
  for (const auto& spec : param_specs(cfg)) ps.add(spec.name, Tensor::zeros(spec.shape));
  return ps;
}

ParameterSet ParameterSet::from_archive(const TensorArchive& archive, const ModelConfig& cfg) {
  const auto specs = param_specs(cfg);
  if (archive.size() != specs.size())
    throw ConfigError("parameter archive has " + std::to_string(archive.size()) + " tensors, config needs " +
                      std::to_string(specs.size()));
  ParameterSet ps;
  for (const auto& spec : specs) {
    const Tensor* t = archive.find(spec.name);
    if (!t) throw ConfigError("parameter archive is missing '" + spec.name + "'");
    if (t->dtype() != DType::f32) throw ConfigError("parameter '" + spec.name + "' is not f32");
    if (t->shape() != spec.shape)
      throw ConfigError("parameter '" + spec.name + "' has shape " + shape_to_string(t->shape()) + ", expected " +
                        shape_to_string(spec.shape));
    for (float v : t->f32())
      if (!std::isfinite(v)) throw ConfigError("parameter '" + spec.name + "' is not finite");
    ps.add(spec.name, *t);
  }
  return ps;
}

TensorArchive ParameterSet::to_archive() const {
  TensorArchive a;
  for (const auto& [name, t] : entries_) a.add(name, t);
  return a;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ParameterSet::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

}  // namespace swinq
