#pragma once

// Token-grid plumbing for shifted-window attention. Grids are row-major
// [height, width, channels]; windows are ordered row-major over the grid and
// tokens row-major inside each window.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "swinq/errors.hpp"
#include "swinq/model/config.hpp"
#include "swinq/model/params.hpp"
#include "swinq/tensor/kernels.hpp"
#include "swinq/tensor/tensor.hpp"

namespace swinq {

/// Additive bias for blocked token pairs.
inline constexpr float kMaskNeg = -1e9f;

/// Per-window additive attention bias, [windows, tokens, tokens].
struct AttentionMask {
  std::size_t windows = 0;
  std::size_t tokens = 0;
  std::vector<float> bias;

  float at(std::size_t window, std::size_t i, std::size_t j) const {
    return bias[(window * tokens + i) * tokens + j];
  }
};

/// Window-order index -> grid index for a grid rolled by (-shift, -shift) and
/// then partitioned into `window` x `window` tiles.
std::vector<std::size_t> window_gather_index(std::size_t height, std::size_t width, std::size_t window,
                                             std::size_t shift);

/// Blocks token pairs that came from different regions of the rolled grid.
AttentionMask build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

/// Patch flattening index: row r of the result holds patch r as (row, col, channel).
std::vector<std::size_t> patch_gather_index(std::size_t image_size, std::size_t patch, std::size_t channels);

/// Patch-merge gather: output row (i, j) concatenates grid cells
/// (2i,2j), (2i+1,2j), (2i,2j+1), (2i+1,2j+1), each with `channels` values.
std::vector<std::size_t> merge_gather_index(std::size_t grid, std::size_t channels);

template <class T>
std::vector<T> gather_rows(std::span<const T> x, std::size_t channels, std::span<const std::size_t> rows) {
  std::vector<T> out(rows.size() * channels);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(x.data() + rows[r] * channels, channels, out.data() + r * channels);
  return out;
}

template <class T>
std::vector<T> scatter_rows(std::span<const T> x, std::size_t channels, std::span<const std::size_t> rows) {
  std::vector<T> out(rows.size() * channels);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(x.data() + r * channels, channels, out.data() + rows[r] * channels);
  return out;
}

template <class T>
std::vector<T> gather_elements(std::span<const T> x, std::span<const std::size_t> index) {
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = x[index[i]];
  return out;
}

/// Multi-head attention inside each window given fused qkv rows
/// [windows * tokens, 3C] laid out as (q | k | v), each split into heads.
/// Scores are (q . k) / sqrt(C / heads) plus the mask bias. Optionally
/// returns the post-softmax probabilities [windows, heads, tokens, tokens].
template <class T>
std::vector<T> window_attention_core(std::span<const T> qkv, std::size_t windows, std::size_t tokens,
                                     std::size_t channels, std::size_t heads, const AttentionMask* mask,
                                     std::vector<T>* probs_out = nullptr) {
  const std::size_t d = channels / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  std::vector<T> ctx(windows * tokens * channels, T(0));
  std::vector<T> scores(tokens * tokens);
  if (probs_out) probs_out->assign(windows * heads * tokens * tokens, T(0));
  for (std::size_t w = 0; w < windows; ++w) {
    const T* base = qkv.data() + w * tokens * 3 * channels;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tokens; ++i) {
        const T* q = base + i * 3 * channels + h * d;
        for (std::size_t j = 0; j < tokens; ++j) {
          const T* k = base + j * 3 * channels + channels + h * d;
          T s = kernels::dot(q, k, d) * scale;
          if (mask) s += static_cast<T>(mask->at(w % mask->windows, i, j));
          scores[i * tokens + j] = s;
        }
      }
      kernels::softmax_rows<T>(scores, tokens);
      if (probs_out)
        std::copy(scores.begin(), scores.end(), probs_out->begin() + ((w * heads + h) * tokens * tokens));
      for (std::size_t i = 0; i < tokens; ++i) {
        T* out = ctx.data() + (w * tokens + i) * channels + h * d;
        for (std::size_t j = 0; j < tokens; ++j) {
          const T p = scores[i * tokens + j];
          const T* v = base + j * 3 * channels + 2 * channels + h * d;
          for (std::size_t e = 0; e < d; ++e) out[e] += p * v[e];
        }
      }
    }
  }
  return ctx;
}

// Tensor-level operations.

/// [H, W, C] -> [H/w * W/w, w*w, C]. Throws DimensionError on divisibility.
Tensor window_partition(const Tensor& x, std::size_t window);
/// Inverse of window_partition for an `height` x `width` grid.
Tensor window_reverse(const Tensor& windows, std::size_t height, std::size_t width);
/// Torus roll of a [H, W, C] grid: out[i][j] = x[(i + s) mod H][(j + s) mod W].
/// Negative offsets roll the other way, so shift(shift(x, s), -s) == x.
Tensor cyclic_shift(const Tensor& x, std::ptrdiff_t offset);

/// [H, W, 3] image -> [H/p * W/p, C] tokens.
Tensor patch_embed(const Tensor& image, const ModelConfig& cfg, const ParameterSet& params);

/// Window attention with explicit weights; x is [windows, tokens, C].
Tensor window_attention(const Tensor& x, const Tensor& qkv_weight, const Tensor& qkv_bias,
                        const Tensor& proj_weight, const Tensor& proj_bias, std::size_t heads,
                        const AttentionMask* mask);

/// Two consecutive blocks of `stage` starting at `first_block` on a [G, G, C]
/// grid; the second uses the stage shift unless `force_shift` overrides it.
Tensor swin_block_pair(const Tensor& x, const ModelConfig& cfg, const ParameterSet& params, std::size_t stage,
                       std::size_t first_block, std::ptrdiff_t force_shift = -1);

/// [G, G, C] -> [G/2, G/2, 2C].
Tensor patch_merge(const Tensor& x, const ModelConfig& cfg, const ParameterSet& params, std::size_t stage);

}  // namespace swinq
