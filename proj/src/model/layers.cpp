#include "swinq/model/layers.hpp"

#include "swinq/model/forward.hpp"

namespace swinq {

namespace {

void require_grid(const Tensor& x, const char* what) {
  if (x.ndim() != 3) throw DimensionError(std::string(what) + " expects [H, W, C], got " + shape_to_string(x.shape()));
  if (x.dtype() != DType::f32) throw DimensionError(std::string(what) + " expects f32 input");
}

}  // namespace

std::vector<std::size_t> window_gather_index(std::size_t height, std::size_t width, std::size_t window,
                                             std::size_t shift) {
  if (window == 0 || height % window != 0 || width % window != 0)
    throw DimensionError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible by window " + std::to_string(window));
  std::vector<std::size_t> index;
  index.reserve(height * width);
  for (std::size_t wr = 0; wr < height / window; ++wr)
    for (std::size_t wc = 0; wc < width / window; ++wc)
      for (std::size_t r = 0; r < window; ++r)
        for (std::size_t c = 0; c < window; ++c) {
          const std::size_t i = (wr * window + r + shift) % height;
          const std::size_t j = (wc * window + c + shift) % width;
          index.push_back(i * width + j);
        }
  return index;
}

AttentionMask build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
  if (shift >= window) throw DomainError("shift must be smaller than the window");
  const auto index = window_gather_index(height, width, window, 0);
  auto region = [&](std::size_t pos, std::size_t extent) {
    if (pos < extent - window) return 0;
    return pos < extent - shift ? 1 : 2;
  };
  AttentionMask mask;
  mask.tokens = window * window;
  mask.windows = index.size() / mask.tokens;
  mask.bias.assign(mask.windows * mask.tokens * mask.tokens, 0.0f);
  if (shift == 0) return mask;
  std::vector<int> id(index.size());
  for (std::size_t k = 0; k < index.size(); ++k)
    id[k] = region(index[k] / width, height) * 3 + region(index[k] % width, width);
  for (std::size_t w = 0; w < mask.windows; ++w)
    for (std::size_t i = 0; i < mask.tokens; ++i)
      for (std::size_t j = 0; j < mask.tokens; ++j)
        if (id[w * mask.tokens + i] != id[w * mask.tokens + j])
          mask.bias[(w * mask.tokens + i) * mask.tokens + j] = kMaskNeg;
  return mask;
}

std::vector<std::size_t> patch_gather_index(std::size_t image_size, std::size_t patch, std::size_t channels) {
  if (patch == 0 || image_size % patch != 0) throw DimensionError("image size not divisible by patch size");
  const std::size_t g = image_size / patch;
  std::vector<std::size_t> index;
  index.reserve(image_size * image_size * channels);
  for (std::size_t pr = 0; pr < g; ++pr)
    for (std::size_t pc = 0; pc < g; ++pc)
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
          for (std::size_t ch = 0; ch < channels; ++ch)
            index.push_back(((pr * patch + r) * image_size + pc * patch + c) * channels + ch);
  return index;
}

std::vector<std::size_t> merge_gather_index(std::size_t grid, std::size_t channels) {
  if (grid % 2 != 0) throw DimensionError("patch merge needs an even grid, got " + std::to_string(grid));
  const std::size_t g = grid / 2;
  static constexpr std::size_t kDr[4] = {0, 1, 0, 1};
  static constexpr std::size_t kDc[4] = {0, 0, 1, 1};
  std::vector<std::size_t> index;
  index.reserve(grid * grid * channels);
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      for (std::size_t q = 0; q < 4; ++q)
        for (std::size_t ch = 0; ch < channels; ++ch)
          index.push_back(((2 * i + kDr[q]) * grid + 2 * j + kDc[q]) * channels + ch);
  return index;
}

Tensor window_partition(const Tensor& x, std::size_t window) {
  require_grid(x, "window_partition");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const auto index = window_gather_index(h, w, window, 0);
  return Tensor::from_f32({index.size() / (window * window), window * window, c}, gather_rows<float>(x.f32(), c, index));
}

Tensor window_reverse(const Tensor& windows, std::size_t height, std::size_t width) {
  if (windows.ndim() != 3) throw DimensionError("window_reverse expects [nW, w*w, C]");
  const std::size_t tokens = windows.dim(1), c = windows.dim(2);
  const auto window = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (window * window != tokens || windows.dim(0) * tokens != height * width)
    throw DimensionError("window_reverse: " + shape_to_string(windows.shape()) + " does not tile " +
                         std::to_string(height) + "x" + std::to_string(width));
  const auto index = window_gather_index(height, width, window, 0);
  return Tensor::from_f32({height, width, c}, scatter_rows<float>(windows.f32(), c, index));
}

Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t offset) {
  require_grid(x, "cyclic_shift");
  const auto h = static_cast<std::ptrdiff_t>(x.dim(0)), w = static_cast<std::ptrdiff_t>(x.dim(1));
  const std::size_t c = x.dim(2);
  std::vector<std::size_t> index;
  index.reserve(static_cast<std::size_t>(h * w));
  for (std::ptrdiff_t i = 0; i < h; ++i)
    for (std::ptrdiff_t j = 0; j < w; ++j)
      index.push_back(static_cast<std::size_t>(((i + offset) % h + h) % h * w + ((j + offset) % w + w) % w));
  return Tensor::from_f32(x.shape(), gather_rows<float>(x.f32(), c, index));
}

Tensor patch_embed(const Tensor& image, const ModelConfig& cfg, const ParameterSet& params) {
  const Shape expect{cfg.image_size, cfg.image_size, cfg.in_channels};
  if (image.shape() != expect)
    throw DimensionError("patch_embed expects " + shape_to_string(expect) + ", got " + shape_to_string(image.shape()));
  const auto patches = gather_elements<float>(image.f32(), patch_gather_index(cfg.image_size, cfg.patch_size,
                                                                              cfg.in_channels));
  FloatBackend<float> be(params);
  const std::size_t n = cfg.stage_grid(0) * cfg.stage_grid(0);
  return Tensor::from_f32({n, cfg.embed_dim}, be.linear("patch_embed", patches, n, LinearOutput::activation));
}

Tensor window_attention(const Tensor& x, const Tensor& qkv_weight, const Tensor& qkv_bias,
                        const Tensor& proj_weight, const Tensor& proj_bias, std::size_t heads,
                        const AttentionMask* mask) {
  if (x.ndim() != 3) throw DimensionError("window_attention expects [nW, tokens, C]");
  const std::size_t windows = x.dim(0), tokens = x.dim(1), c = x.dim(2);
  if (heads == 0 || c % heads != 0)
    throw DimensionError("channels " + std::to_string(c) + " not divisible by " + std::to_string(heads) + " heads");
  if (qkv_weight.shape() != Shape{3 * c, c} || qkv_bias.shape() != Shape{3 * c} ||
      proj_weight.shape() != Shape{c, c} || proj_bias.shape() != Shape{c})
    throw DimensionError("window_attention weight shapes do not match channels " + std::to_string(c));
  if (mask && (mask->tokens != tokens || windows % mask->windows != 0))
    throw DimensionError("attention mask does not match the window layout");
  const std::size_t rows = windows * tokens;
  std::vector<float> wt(3 * c * c);
  kernels::transpose<float>(qkv_weight.f32(), 3 * c, c, wt);
  std::vector<float> qkv(rows * 3 * c);
  kernels::linear_t<float>(x.f32(), rows, c, wt, qkv_bias.f32(), 3 * c, qkv);
  const auto ctx = window_attention_core<float>(qkv, windows, tokens, c, heads, mask);
  std::vector<float> pt(c * c);
  kernels::transpose<float>(proj_weight.f32(), c, c, pt);
  std::vector<float> y(rows * c);
  kernels::linear_t<float>(ctx, rows, c, pt, proj_bias.f32(), c, y);
  return Tensor::from_f32(x.shape(), std::move(y));
}

Tensor swin_block_pair(const Tensor& x, const ModelConfig& cfg, const ParameterSet& params, std::size_t stage,
                       std::size_t first_block, std::ptrdiff_t force_shift) {
  require_grid(x, "swin_block_pair");
  if (stage >= cfg.num_stages() || first_block + 1 >= cfg.depths[stage])
    throw DimensionError("stage " + std::to_string(stage) + " has no block pair at " + std::to_string(first_block));
  StagePlan sp = make_stage_plan(cfg, stage);
  const Shape expect{sp.grid, sp.grid, sp.channels};
  if (x.shape() != expect)
    throw DimensionError("swin_block_pair expects " + shape_to_string(expect) + ", got " + shape_to_string(x.shape()));
  if (force_shift >= 0) {
    sp.shift = static_cast<std::size_t>(force_shift);
    sp.shifted_index = window_gather_index(sp.grid, sp.grid, sp.window, sp.shift);
    sp.mask = build_shift_mask(sp.grid, sp.grid, sp.window, sp.shift);
  }
  FloatBackend<float> be(params);
  const auto v = x.f32();
  std::vector<float> tokens(v.begin(), v.end());
  block_forward(be, sp, stage, first_block, false, tokens);
  block_forward(be, sp, stage, first_block + 1, true, tokens);
  return Tensor::from_f32(x.shape(), std::move(tokens));
}

Tensor patch_merge(const Tensor& x, const ModelConfig& cfg, const ParameterSet& params, std::size_t stage) {
  require_grid(x, "patch_merge");
  if (stage + 1 >= cfg.num_stages()) throw DimensionError("stage " + std::to_string(stage) + " has no merge");
  const std::size_t g = cfg.stage_grid(stage), c = cfg.stage_dim(stage);
  if (x.shape() != Shape{g, g, c})
    throw DimensionError("patch_merge expects " + shape_to_string({g, g, c}) + ", got " + shape_to_string(x.shape()));
  ForwardPlan plan(cfg);
  FloatBackend<float> be(params);
  auto y = merge_forward<FloatBackend<float>>(be, plan, stage, x.f32());
  return Tensor::from_f32({g / 2, g / 2, 2 * c}, std::move(y));
}

}  // namespace swinq
