#pragma once

// Backend-generic forward pass. A backend supplies the numeric policy of each
// layer kind; the graph (windowing, residuals, merges, pooling) lives here
// once so every precision mode executes the same dataflow.
//
// Backend requirements, with T = Backend::value_type:
//   std::vector<T> linear(const std::string& layer, std::span<const T> x, std::size_t rows, LinearOutput kind);
//   std::vector<T> layernorm(const std::string& site, const std::string& gamma, const std::string& beta,
//                            std::span<const T> x, std::size_t rows);
//   std::vector<T> attention(const std::string& block, std::span<const T> qkv, std::size_t windows,
//                            std::size_t tokens, std::size_t channels, std::size_t heads, const AttentionMask* mask);
//   void gelu(std::span<T> x);
//   void boundary(std::span<T> x);   // storage rounding between layers

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "swinq/model/config.hpp"
#include "swinq/model/layers.hpp"
#include "swinq/model/params.hpp"
#include "swinq/tensor/half.hpp"
#include "swinq/tensor/kernels.hpp"

namespace swinq {

enum class LinearOutput { activation, logits };

/// Geometry shared by all blocks of one stage.
struct StagePlan {
  std::size_t grid = 0;
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::size_t window = 0;
  std::size_t shift = 0;
  std::vector<std::size_t> plain_index;
  std::vector<std::size_t> shifted_index;
  AttentionMask mask;
};

StagePlan make_stage_plan(const ModelConfig& cfg, std::size_t stage);

/// Precomputed index tables for a config; cheap to share across forwards.
struct ForwardPlan {
  ModelConfig cfg;
  std::vector<std::size_t> patch_index;
  std::vector<StagePlan> stages;
  std::vector<std::vector<std::size_t>> merge_index;

  explicit ForwardPlan(const ModelConfig& c);
};

/// One block on a [G*G, C] token sequence. `shifted` selects the rolled
/// window layout and its mask; with a zero shift both are the identity.
template <class Backend>
void block_forward(Backend& be, const StagePlan& sp, std::size_t stage, std::size_t block, bool shifted,
                   std::vector<typename Backend::value_type>& x) {
  using T = typename Backend::value_type;
  const std::string p = block_prefix(stage, block);
  const std::size_t n = sp.grid * sp.grid;
  const std::size_t c = sp.channels;
  const std::size_t tokens = sp.window * sp.window;
  const std::size_t windows = n / tokens;
  const auto& index = shifted ? sp.shifted_index : sp.plain_index;

  std::vector<T> h = be.layernorm(p + ".ln1", p + ".ln1.weight", p + ".ln1.bias", x, n);
  be.boundary(h);
  std::vector<T> hw = gather_rows<T>(h, c, index);
  std::vector<T> qkv = be.linear(p + ".qkv", hw, n, LinearOutput::activation);
  be.boundary(qkv);
  std::vector<T> ctx = be.attention(p, qkv, windows, tokens, c, sp.heads, shifted ? &sp.mask : nullptr);
  be.boundary(ctx);
  std::vector<T> o = be.linear(p + ".proj", ctx, n, LinearOutput::activation);
  be.boundary(o);
  o = scatter_rows<T>(o, c, index);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];
  be.boundary(x);

  h = be.layernorm(p + ".ln2", p + ".ln2.weight", p + ".ln2.bias", x, n);
  be.boundary(h);
  std::vector<T> m = be.linear(p + ".mlp1", h, n, LinearOutput::activation);
  be.boundary(m);
  be.gelu(m);
  be.boundary(m);
  o = be.linear(p + ".mlp2", m, n, LinearOutput::activation);
  be.boundary(o);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];
  be.boundary(x);
}

/// [G*G, C] -> [(G/2)^2, 2C].
template <class Backend>
std::vector<typename Backend::value_type> merge_forward(Backend& be, const ForwardPlan& plan, std::size_t stage,
                                                        std::span<const typename Backend::value_type> x) {
  using T = typename Backend::value_type;
  const std::string p = merge_prefix(stage);
  const std::size_t g = plan.stages[stage].grid / 2;
  std::vector<T> cat = gather_elements<T>(x, plan.merge_index[stage]);
  std::vector<T> h = be.layernorm(p + ".norm", p + ".norm.weight", p + ".norm.bias", cat, g * g);
  be.boundary(h);
  std::vector<T> y = be.linear(p + ".reduce", h, g * g, LinearOutput::activation);
  be.boundary(y);
  return y;
}

/// Full classifier on a normalized [S, S, in_channels] image; returns logits.
template <class Backend>
std::vector<typename Backend::value_type> forward_with(Backend& be, const ForwardPlan& plan,
                                                       std::span<const typename Backend::value_type> image) {
  using T = typename Backend::value_type;
  const ModelConfig& cfg = plan.cfg;
  const std::size_t expect = cfg.image_size * cfg.image_size * cfg.in_channels;
  if (image.size() != expect)
    throw DimensionError("image has " + std::to_string(image.size()) + " values, model expects " +
                         std::to_string(expect));
  const std::size_t n0 = cfg.stage_grid(0) * cfg.stage_grid(0);
  std::vector<T> patches = gather_elements<T>(image, plan.patch_index);
  be.boundary(patches);
  std::vector<T> x = be.linear("patch_embed", patches, n0, LinearOutput::activation);
  be.boundary(x);
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    const StagePlan& sp = plan.stages[s];
    for (std::size_t b = 0; b < cfg.depths[s]; ++b) block_forward(be, sp, s, b, b % 2 == 1, x);
    if (s + 1 < cfg.num_stages()) x = merge_forward<Backend>(be, plan, s, x);
  }
  const std::size_t c = cfg.final_dim();
  const std::size_t n = x.size() / c;
  std::vector<T> pooled(c, T(0));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) pooled[j] += x[r * c + j];
  for (T& v : pooled) v /= static_cast<T>(n);
  be.boundary(pooled);
  std::vector<T> h = be.layernorm("final_norm", "final_norm.gamma", "final_norm.beta", pooled, 1);
  be.boundary(h);
  std::vector<T> logits = be.linear("head", h, 1, LinearOutput::logits);
  be.boundary(logits);
  return logits;
}

/// Called with (site, values) for every activation a quantized engine would
/// calibrate: `<layer>.in`, `<layer>.out`, `<norm>.in` and `<block>.attn.probs`.
template <class T>
using ActivationObserver = std::function<void(const std::string&, std::span<const T>)>;

/// Plain floating-point execution over a ParameterSet. With `round_f16` every
/// layer boundary is rounded to binary16 storage. Forward calls through a
/// const reference are safe to run concurrently.
template <class T>
class FloatBackend {
 public:
  using value_type = T;

  explicit FloatBackend(const ParameterSet& params, bool round_f16 = false)
      : FloatBackend(TypedParams<T>::from(params), round_f16) {}

  explicit FloatBackend(const TypedParams<T>& params, bool round_f16 = false) : round_f16_(round_f16) {
    for (const auto& e : params.entries) {
      if (e.shape.size() == 2) {
        std::vector<T> wt(e.values.size());
        kernels::transpose<T>(e.values, e.shape[0], e.shape[1], wt);
        weights_[e.name] = {std::move(wt), e.shape[1], e.shape[0]};
      } else {
        vectors_[e.name] = e.values;
      }
    }
  }

  void set_observer(ActivationObserver<T> obs) { observer_ = std::move(obs); }

  std::vector<T> linear(const std::string& layer, std::span<const T> x, std::size_t rows, LinearOutput kind) const {
    const Weight& w = weights_.at(layer + ".weight");
    if (x.size() != rows * w.in) throw DimensionError("linear '" + layer + "' input width mismatch");
    observe(layer + ".in", x);
    std::span<const T> bias;
    if (const auto it = vectors_.find(layer + ".bias"); it != vectors_.end()) bias = it->second;
    std::vector<T> y(rows * w.out);
    kernels::linear_t<T>(x, rows, w.in, w.wt, bias, w.out, y);
    if (kind == LinearOutput::activation) observe(layer + ".out", y);
    return y;
  }

  std::vector<T> layernorm(const std::string& site, const std::string& gamma, const std::string& beta,
                           std::span<const T> x, std::size_t rows) const {
    observe(site + ".in", x);
    const auto& g = vectors_.at(gamma);
    std::vector<T> y(x.size());
    (void)rows;
    kernels::layernorm_rows<T>(x, g.size(), g, vectors_.at(beta), static_cast<T>(1e-5), y);
    return y;
  }

  std::vector<T> attention(const std::string& block, std::span<const T> qkv, std::size_t windows,
                           std::size_t tokens, std::size_t channels, std::size_t heads, const AttentionMask* mask) const {
    if (!observer_) return window_attention_core<T>(qkv, windows, tokens, channels, heads, mask);
    std::vector<T> probs;
    auto ctx = window_attention_core<T>(qkv, windows, tokens, channels, heads, mask, &probs);
    observer_(block + ".attn.probs", probs);
    return ctx;
  }

  void gelu(std::span<T> x) const { kernels::gelu_inplace<T>(x); }

  void boundary(std::span<T> x) const {
    if (!round_f16_) return;
    for (T& v : x) v = static_cast<T>(round_to_half(static_cast<float>(v)));
  }

 private:
  struct Weight {
    std::vector<T> wt;
    std::size_t in = 0;
    std::size_t out = 0;
  };

  void observe(const std::string& site, std::span<const T> v) const {
    if (observer_) observer_(site, v);
  }

  bool round_f16_;
  std::map<std::string, Weight> weights_;
  std::map<std::string, std::vector<T>> vectors_;
  ActivationObserver<T> observer_;
};

/// f32 logits of the model on a normalized image tensor [S, S, C].
Tensor forward(const Tensor& image, const ModelConfig& cfg, const ParameterSet& params);

/// Forward pass in scalar type T on raw values; used by gradient checks.
template <class T>
std::vector<T> forward_values(std::span<const T> image, const ForwardPlan& plan, const TypedParams<T>& params) {
  FloatBackend<T> be(params);
  return forward_with(be, plan, image);
}

}  // namespace swinq
