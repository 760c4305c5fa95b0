#include "swinq/model/forward.hpp"

namespace swinq {

StagePlan make_stage_plan(const ModelConfig& cfg, std::size_t stage) {
  StagePlan sp;
  sp.grid = cfg.stage_grid(stage);
  sp.channels = cfg.stage_dim(stage);
  sp.heads = cfg.num_heads[stage];
  sp.window = cfg.stage_window(stage);
  sp.shift = cfg.stage_shift(stage);
  sp.plain_index = window_gather_index(sp.grid, sp.grid, sp.window, 0);
  sp.shifted_index = window_gather_index(sp.grid, sp.grid, sp.window, sp.shift);
  sp.mask = build_shift_mask(sp.grid, sp.grid, sp.window, sp.shift);
  return sp;
}

ForwardPlan::ForwardPlan(const ModelConfig& c) : cfg(c) {
  cfg.validate();
  patch_index = patch_gather_index(cfg.image_size, cfg.patch_size, cfg.in_channels);
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    stages.push_back(make_stage_plan(cfg, s));
    if (s + 1 < cfg.num_stages()) merge_index.push_back(merge_gather_index(cfg.stage_grid(s), cfg.stage_dim(s)));
  }
}

Tensor forward(const Tensor& image, const ModelConfig& cfg, const ParameterSet& params) {
  const Shape expect{cfg.image_size, cfg.image_size, cfg.in_channels};
  if (image.shape() != expect)
    throw DimensionError("forward expects " + shape_to_string(expect) + ", got " + shape_to_string(image.shape()));
  ForwardPlan plan(cfg);
  FloatBackend<float> be(params);
  auto logits = forward_with(be, plan, image.f32());
  return Tensor::from_f32({cfg.num_classes}, std::move(logits));
}

}  // namespace swinq
