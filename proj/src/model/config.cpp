#include "swinq/model/config.hpp"

#include <cmath>

#include "swinq/errors.hpp"

namespace swinq {

ModelConfig ModelConfig::tiny() { return ModelConfig{}; }

ModelConfig ModelConfig::swin_t(std::size_t num_classes) {
  ModelConfig cfg;
  cfg.image_size = 224;
  cfg.patch_size = 4;
  cfg.in_channels = 3;
  cfg.embed_dim = 96;
  cfg.depths = {2, 2, 6, 2};
  cfg.num_heads = {3, 6, 12, 24};
  cfg.window_size = 7;
  cfg.mlp_ratio = 4.0;
  cfg.num_classes = num_classes;
  return cfg;
}

std::size_t ModelConfig::hidden_dim(std::size_t stage) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(stage_dim(stage)) * mlp_ratio));
}

std::size_t ModelConfig::stage_window(std::size_t stage) const noexcept {
  const std::size_t g = stage_grid(stage);
  return g < window_size ? g : window_size;
}

std::size_t ModelConfig::stage_shift(std::size_t stage) const noexcept {
  return stage_grid(stage) > window_size ? window_size / 2 : 0;
}

std::size_t ModelConfig::final_dim() const noexcept {
  return depths.empty() ? embed_dim : stage_dim(depths.size() - 1);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (image_size == 0 || patch_size == 0 || in_channels == 0 || embed_dim == 0 || window_size == 0 ||
      num_classes == 0)
    fail("sizes must be positive");
  if (image_size % patch_size != 0) fail("image_size must be divisible by patch_size");
  if (depths.size() != num_heads.size()) fail("depths and num_heads must have the same length");
  if (!(mlp_ratio > 0.0)) fail("mlp_ratio must be positive");
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const std::size_t g = stage_grid(i);
    if (i > 0 && stage_grid(i - 1) % 2 != 0) fail("stage " + std::to_string(i - 1) + " grid is odd, cannot merge");
    if (g == 0) fail("stage " + std::to_string(i) + " has an empty token grid");
    if (depths[i] == 0) fail("stage depth must be positive");
    if (num_heads[i] == 0 || stage_dim(i) % num_heads[i] != 0)
      fail("stage " + std::to_string(i) + " channels not divisible by heads");
    if (g % stage_window(i) != 0)
      fail("stage " + std::to_string(i) + " grid " + std::to_string(g) + " not divisible by window " +
           std::to_string(stage_window(i)));
    const double hidden = static_cast<double>(stage_dim(i)) * mlp_ratio;
    if (hidden != std::floor(hidden) || hidden < 1.0) fail("mlp hidden width must be a positive integer");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"image_size", cfg.image_size}, {"patch_size", cfg.patch_size},
                     {"in_channels", cfg.in_channels}, {"embed_dim", cfg.embed_dim},
                     {"depths", cfg.depths},           {"num_heads", cfg.num_heads},
                     {"window_size", cfg.window_size}, {"mlp_ratio", cfg.mlp_ratio},
                     {"num_classes", cfg.num_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  static const char* kFields[] = {"image_size", "patch_size",  "in_channels", "embed_dim",  "depths",
                                  "num_heads",  "window_size", "mlp_ratio",   "num_classes"};
  for (const char* f : kFields)
    if (!j.contains(f)) throw ConfigError(std::string("model config is missing '") + f + "'");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* f : kFields) known = known || key == f;
    if (!known) throw ConfigError("unknown model config field '" + key + "'");
  }
  j.at("image_size").get_to(cfg.image_size);
  j.at("patch_size").get_to(cfg.patch_size);
  j.at("in_channels").get_to(cfg.in_channels);
  j.at("embed_dim").get_to(cfg.embed_dim);
  j.at("depths").get_to(cfg.depths);
  j.at("num_heads").get_to(cfg.num_heads);
  j.at("window_size").get_to(cfg.window_size);
  j.at("mlp_ratio").get_to(cfg.mlp_ratio);
  j.at("num_classes").get_to(cfg.num_classes);
}

std::string block_prefix(std::size_t stage, std::size_t block) {
  return "stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

std::string merge_prefix(std::size_t stage) { return "stage" + std::to_string(stage) + ".merge"; }

}  // namespace swinq
