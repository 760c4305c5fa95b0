#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "swinq/engine/engine.hpp"
#include "swinq/model/forward.hpp"

namespace swinq {

/// How an int8 engine evaluates its matrix products. Both paths quantize at
/// the same sites with the same rounding; `integer` multiplies u8 activations
/// by i8 weights into i32 accumulators with zero-point correction, while
/// `fake_quant` carries dequantized levels through double-precision kernels.
/// Products are exact in both, so logits agree bit for bit.
enum class KernelPath { integer, fake_quant };

std::string to_string(KernelPath p);

/// Backend for int8 engines. Linear inputs are quantized at `<layer>.in`,
/// accumulators requantized at `<layer>.out` and handed on dequantized; the
/// head emits float logits. Attention scores come from an integer q.k
/// product, softmax runs in f32, and the probabilities are quantized at
/// `<block>.attn.probs` before the integer p.v product, whose result is
/// requantized straight onto the `proj.in` grid. In fqvit mode layer-norm
/// inputs are quantized with power-of-two channel factors and normalized
/// from integer statistics.
class QuantBackend {
 public:
  using value_type = float;

  QuantBackend(const Engine& engine, KernelPath path);

  std::vector<float> linear(const std::string& layer, std::span<const float> x, std::size_t rows,
                            LinearOutput kind) const;
  std::vector<float> layernorm(const std::string& site, const std::string& gamma, const std::string& beta,
                               std::span<const float> x, std::size_t rows) const;
  std::vector<float> attention(const std::string& block, std::span<const float> qkv, std::size_t windows,
                               std::size_t tokens, std::size_t channels, std::size_t heads,
                               const AttentionMask* mask) const;
  void gelu(std::span<float> x) const { kernels::gelu_inplace<float>(x); }
  void boundary(std::span<float>) const {}

  KernelPath path() const noexcept { return path_; }

 private:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<std::int8_t> weight;      // [out, in]
    std::vector<std::int32_t> row_sum;    // integer path
    std::vector<double> weight_t;         // [in, out], fake-quant path
    std::vector<float> bias;              // zeros when the layer has none
    QuantParams in_qp;
    std::optional<QuantParams> out_qp;    // absent for the head
    std::vector<float> multiplier;
    std::vector<float> offset;
  };

  std::vector<std::int64_t> accumulate(const Layer& l, std::span<const float> x, std::size_t rows) const;
  const QuantParams& site(const std::string& name) const;

  KernelPath path_;
  bool ptf_norms_ = false;
  std::map<std::string, Layer> layers_;
  std::map<std::string, std::vector<float>> vectors_;
  std::map<std::string, QuantParams> sites_;
};

/// Executes an engine at its committed precision. Immutable after
/// construction; concurrent `forward` calls are safe.
class EngineRuntime {
 public:
  explicit EngineRuntime(const Engine& engine, KernelPath path = KernelPath::integer);

  std::vector<float> forward(std::span<const float> image) const;
  const ModelConfig& config() const noexcept { return plan_.cfg; }

 private:
  ForwardPlan plan_;
  std::unique_ptr<const FloatBackend<float>> float_;
  std::unique_ptr<const QuantBackend> quant_;
};

/// One-shot convenience over EngineRuntime.
std::vector<float> engine_forward(const Engine& engine, std::span<const float> image,
                                  KernelPath path = KernelPath::integer);

}  // namespace swinq
