#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace swinq {

/// Architecture hyperparameters of the hierarchical shifted-window classifier.
struct ModelConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 2;
  std::size_t in_channels = 3;
  std::size_t embed_dim = 16;
  std::vector<std::size_t> depths = {2, 2};
  std::vector<std::size_t> num_heads = {2, 4};
  std::size_t window_size = 4;
  double mlp_ratio = 4.0;
  std::size_t num_classes = 4;

  /// Desk-scale configuration used by tests and the synthetic pipeline.
  static ModelConfig tiny();
  /// Swin-T: embed 96, depths [2,2,6,2], heads [3,6,12,24], window 7, 224 px.
  static ModelConfig swin_t(std::size_t num_classes = 5);

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  std::size_t num_stages() const noexcept { return depths.size(); }
  std::size_t stage_dim(std::size_t stage) const noexcept { return embed_dim << stage; }
  /// Tokens per side of the stage's square token grid.
  std::size_t stage_grid(std::size_t stage) const noexcept { return (image_size / patch_size) >> stage; }
  std::size_t hidden_dim(std::size_t stage) const;
  /// The window shrinks to the grid when the grid is smaller than it.
  std::size_t stage_window(std::size_t stage) const noexcept;
  /// Shift used by the odd blocks of a stage; zero when one window covers the grid.
  std::size_t stage_shift(std::size_t stage) const noexcept;
  std::size_t final_dim() const noexcept;
  std::size_t patch_dim() const noexcept { return patch_size * patch_size * in_channels; }

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

std::string block_prefix(std::size_t stage, std::size_t block);
std::string merge_prefix(std::size_t stage);

}  // namespace swinq
