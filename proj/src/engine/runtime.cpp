#include "swinq/engine/runtime.hpp"

#include <cmath>

#include "swinq/errors.hpp"
#include "swinq/quant/quantize.hpp"

namespace swinq {

namespace {

/// u8 storage of 8-bit activation levels; symmetric levels are offset by 128.
struct Levels {
  std::vector<std::uint8_t> q;
  std::int32_t zero = 0;
};

void check_activation_params(const QuantParams& qp, const std::string& what) {
  if (qp.bits != 8 || (qp.scheme != QuantScheme::affine && qp.scheme != QuantScheme::symmetric))
    throw ConfigError(what + " needs 8-bit affine or symmetric params");
}

Levels to_levels(std::span<const float> x, const QuantParams& qp) {
  const std::int32_t shift = qp.scheme == QuantScheme::symmetric ? 128 : 0;
  Levels l;
  l.zero = qp.zero_point + shift;
  l.q.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) l.q[i] = static_cast<std::uint8_t>(quantize_value(x[i], qp) + shift);
  return l;
}

std::vector<double> to_offsets(std::span<const float> x, const QuantParams& qp) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<double>(quantize_value(x[i], qp) - qp.zero_point);
  return out;
}

/// Layer norm of one row from its integer levels `m` (in units of the finest
/// channel step) and their exact first and second moments.
void ptf_normalize(std::span<const std::int32_t> m, std::int64_t s1, std::int64_t s2, float scale,
                   std::span<const float> gamma, std::span<const float> beta, float* y) {
  const double n = static_cast<double>(m.size());
  const double mean = static_cast<double>(s1) / n;
  const double var = std::max(0.0, static_cast<double>(s2) / n - mean * mean);
  const double unit = static_cast<double>(scale) / static_cast<double>(1 << kPtfMaxExponent);
  const double rstd = 1.0 / std::sqrt(var * unit * unit + 1e-5);
  for (std::size_t c = 0; c < m.size(); ++c)
    y[c] = static_cast<float>((static_cast<double>(m[c]) - mean) * unit * rstd) * gamma[c] + beta[c];
}

}  // namespace

std::string to_string(KernelPath p) { return p == KernelPath::integer ? "integer" : "fake_quant"; }

QuantBackend::QuantBackend(const Engine& engine, KernelPath path) : path_(path), sites_(engine.activations) {
  if (engine.mode.precision != Precision::int8) throw ConfigError("QuantBackend needs an int8 engine");
  ptf_norms_ = engine.mode.method == CalibrationMethod::fqvit;
  for (const auto& spec : param_specs(engine.config)) {
    const Tensor& t = engine.tensors.at(spec.name);
    if (spec.shape.size() != 2) {
      vectors_[spec.name] = t.to_f32();
      continue;
    }
    const std::string name = spec.name.substr(0, spec.name.size() - std::string(".weight").size());
    Layer& l = layers_[name];
    l.out = spec.shape[0];
    l.in = spec.shape[1];
    const auto levels = t.i8();
    l.weight.assign(levels.begin(), levels.end());
    const auto scales = engine.tensors.at(spec.name + ".scales").f32();
    if (const Tensor* b = engine.tensors.find(name + ".bias"))
      l.bias = b->to_f32();
    else
      l.bias.assign(l.out, 0.0f);
    l.in_qp = site(name + ".in");
    check_activation_params(l.in_qp, name + ".in");
    if (name != "head") {
      l.out_qp = site(name + ".out");
      check_activation_params(*l.out_qp, name + ".out");
    }
    l.multiplier.resize(l.out);
    l.offset.resize(l.out);
    for (std::size_t o = 0; o < l.out; ++o) {
      if (l.out_qp) {
        l.multiplier[o] = l.in_qp.scale * scales[o] / l.out_qp->scale;
        l.offset[o] = l.bias[o] / l.out_qp->scale;
      } else {
        l.multiplier[o] = l.in_qp.scale * scales[o];
        l.offset[o] = l.bias[o];
      }
    }
    if (path_ == KernelPath::integer) {
      l.row_sum.assign(l.out, 0);
      for (std::size_t o = 0; o < l.out; ++o)
        for (std::size_t k = 0; k < l.in; ++k) l.row_sum[o] += l.weight[o * l.in + k];
    } else {
      l.weight_t.resize(l.weight.size());
      for (std::size_t o = 0; o < l.out; ++o)
        for (std::size_t k = 0; k < l.in; ++k) l.weight_t[k * l.out + o] = static_cast<double>(l.weight[o * l.in + k]);
    }
  }
}

const QuantParams& QuantBackend::site(const std::string& name) const {
  const auto it = sites_.find(name);
  if (it == sites_.end()) throw ConfigError("engine has no activation params for '" + name + "'");
  return it->second;
}

std::vector<std::int64_t> QuantBackend::accumulate(const Layer& l, std::span<const float> x, std::size_t rows) const {
  std::vector<std::int64_t> acc(rows * l.out);
  if (path_ == KernelPath::integer) {
    const Levels lv = to_levels(x, l.in_qp);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint8_t* xr = lv.q.data() + r * l.in;
      for (std::size_t o = 0; o < l.out; ++o) {
        const std::int8_t* wr = l.weight.data() + o * l.in;
        std::int32_t s = 0;
        for (std::size_t k = 0; k < l.in; ++k) s += static_cast<std::int32_t>(xr[k]) * static_cast<std::int32_t>(wr[k]);
        acc[r * l.out + o] = s - lv.zero * l.row_sum[o];
      }
    }
  } else {
    const std::vector<double> xd = to_offsets(x, l.in_qp);
    std::vector<double> y(rows * l.out);
    kernels::linear_t<double>(xd, rows, l.in, l.weight_t, {}, l.out, y);
    for (std::size_t i = 0; i < y.size(); ++i) acc[i] = static_cast<std::int64_t>(y[i]);
  }
  return acc;
}

std::vector<float> QuantBackend::linear(const std::string& layer, std::span<const float> x, std::size_t rows,
                                        LinearOutput kind) const {
  const auto it = layers_.find(layer);
  if (it == layers_.end()) throw ConfigError("engine has no layer '" + layer + "'");
  const Layer& l = it->second;
  if (x.size() != rows * l.in) throw DimensionError("linear '" + layer + "' input width mismatch");
  if ((kind == LinearOutput::logits) != !l.out_qp)
    throw ConfigError("layer '" + layer + "' output kind does not match its activation params");
  const auto acc = accumulate(l, x, rows);
  std::vector<float> y(acc.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < l.out; ++o) {
      const std::size_t i = r * l.out + o;
      if (l.out_qp)
        y[i] = dequantize_value(requantize(acc[i], l.multiplier[o], l.offset[o], *l.out_qp), *l.out_qp);
      else
        y[i] = static_cast<float>(acc[i]) * l.multiplier[o] + l.offset[o];
    }
  return y;
}

std::vector<float> QuantBackend::layernorm(const std::string& site_name, const std::string& gamma,
                                           const std::string& beta, std::span<const float> x,
                                           std::size_t rows) const {
  const auto& g = vectors_.at(gamma);
  const auto& b = vectors_.at(beta);
  const std::size_t c = g.size();
  if (x.size() != rows * c) throw DimensionError("layer norm '" + site_name + "' width mismatch");
  std::vector<float> y(x.size());
  if (!ptf_norms_) {
    kernels::layernorm_rows<float>(x, c, g, b, 1e-5f, y);
    return y;
  }
  const QuantParams& qp = site(site_name + ".in");
  if (qp.scheme != QuantScheme::pot_channel || qp.exponents.size() != c)
    throw ConfigError("layer norm '" + site_name + "' needs per-channel power-of-two params");
  std::vector<std::int32_t> m(c);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = x.data() + r * c;
    std::int64_t s1 = 0;
    std::int64_t s2 = 0;
    if (path_ == KernelPath::integer) {
      for (std::size_t j = 0; j < c; ++j) {
        m[j] = quantize_ptf_value(xr[j], qp, j) * (1 << (kPtfMaxExponent - qp.exponents[j]));
        s1 += m[j];
        s2 += static_cast<std::int64_t>(m[j]) * m[j];
      }
    } else {
      double d1 = 0.0;
      double d2 = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double v =
            std::ldexp(static_cast<double>(quantize_ptf_value(xr[j], qp, j)), kPtfMaxExponent - qp.exponents[j]);
        d1 += v;
        d2 += v * v;
        m[j] = static_cast<std::int32_t>(v);
      }
      s1 = static_cast<std::int64_t>(d1);
      s2 = static_cast<std::int64_t>(d2);
    }
    ptf_normalize(m, s1, s2, qp.scale, g, b, y.data() + r * c);
  }
  return y;
}

std::vector<float> QuantBackend::attention(const std::string& block, std::span<const float> qkv, std::size_t windows,
                                           std::size_t tokens, std::size_t channels, std::size_t heads,
                                           const AttentionMask* mask) const {
  if (channels % heads != 0) throw DimensionError("channels not divisible by heads");
  const QuantParams& in_qp = site(block + ".qkv.out");
  const QuantParams& p_qp = site(block + ".attn.probs");
  const QuantParams& ctx_qp = site(block + ".proj.in");
  check_activation_params(ctx_qp, block + ".proj.in");
  const std::size_t d = channels / heads;
  const std::size_t row = 3 * channels;
  const std::size_t tt = tokens * tokens;
  const bool log2_probs = p_qp.scheme == QuantScheme::log2;
  const int top_level = (1 << p_qp.bits) - 1;
  const float p_scale = log2_probs ? std::ldexp(1.0f, -top_level) : p_qp.scale;
  const float score_mult = in_qp.scale * in_qp.scale * (1.0f / std::sqrt(static_cast<float>(d)));
  const float pv_mult = p_scale * in_qp.scale / ctx_qp.scale;

  Levels lv;
  std::vector<double> off;
  if (path_ == KernelPath::integer)
    lv = to_levels(qkv, in_qp);
  else
    off = to_offsets(qkv, in_qp);

  std::vector<float> ctx(windows * tokens * channels);
  std::vector<std::int64_t> acc_qk(tt);
  std::vector<float> scores(tt);
  std::vector<std::int32_t> p_int(tt);
  std::vector<std::int64_t> acc_pv(tokens * d);
  std::vector<std::int32_t> q_sum(tokens), k_sum(tokens);
  std::vector<double> qd(tokens * d), kt(d * tokens), vd(tokens * d), pd(tt), sd(tt), cd(tokens * d);

  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t base = w * tokens * row;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = base + h * d;
      const std::size_t ko = qo + channels;
      const std::size_t vo = qo + 2 * channels;

      if (path_ == KernelPath::integer) {
        const std::int32_t z = lv.zero;
        for (std::size_t i = 0; i < tokens; ++i) {
          q_sum[i] = k_sum[i] = 0;
          for (std::size_t e = 0; e < d; ++e) {
            q_sum[i] += lv.q[qo + i * row + e];
            k_sum[i] += lv.q[ko + i * row + e];
          }
        }
        for (std::size_t i = 0; i < tokens; ++i)
          for (std::size_t j = 0; j < tokens; ++j) {
            std::int32_t s = 0;
            const std::uint8_t* qi = lv.q.data() + qo + i * row;
            const std::uint8_t* kj = lv.q.data() + ko + j * row;
            for (std::size_t e = 0; e < d; ++e) s += static_cast<std::int32_t>(qi[e]) * kj[e];
            acc_qk[i * tokens + j] = static_cast<std::int64_t>(s) - static_cast<std::int64_t>(z) * k_sum[j] -
                                     static_cast<std::int64_t>(z) * q_sum[i] +
                                     static_cast<std::int64_t>(d) * z * z;
          }
      } else {
        for (std::size_t i = 0; i < tokens; ++i)
          for (std::size_t e = 0; e < d; ++e) {
            qd[i * d + e] = off[qo + i * row + e];
            kt[e * tokens + i] = off[ko + i * row + e];
            vd[i * d + e] = off[vo + i * row + e];
          }
        kernels::matmul<double>(qd, kt, sd, tokens, d, tokens);
        for (std::size_t i = 0; i < tt; ++i) acc_qk[i] = static_cast<std::int64_t>(sd[i]);
      }

      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t j = 0; j < tokens; ++j) {
          float s = static_cast<float>(acc_qk[i * tokens + j]) * score_mult;
          if (mask) s += mask->at(w % mask->windows, i, j);
          scores[i * tokens + j] = s;
        }
      kernels::softmax_rows<float>(scores, tokens);
      for (std::size_t i = 0; i < tt; ++i)
        p_int[i] = log2_probs ? (1 << (top_level - log2_level(scores[i], p_qp.bits)))
                              : quantize_value(scores[i], p_qp) - p_qp.zero_point;

      if (path_ == KernelPath::integer) {
        const std::int64_t z = lv.zero;
        for (std::size_t i = 0; i < tokens; ++i) {
          std::int64_t p_sum = 0;
          for (std::size_t j = 0; j < tokens; ++j) p_sum += p_int[i * tokens + j];
          for (std::size_t e = 0; e < d; ++e) {
            std::int64_t s = 0;
            for (std::size_t j = 0; j < tokens; ++j)
              s += static_cast<std::int64_t>(p_int[i * tokens + j]) * lv.q[vo + j * row + e];
            acc_pv[i * d + e] = s - z * p_sum;
          }
        }
      } else {
        for (std::size_t i = 0; i < tt; ++i) pd[i] = static_cast<double>(p_int[i]);
        kernels::matmul<double>(pd, vd, cd, tokens, tokens, d);
        for (std::size_t i = 0; i < tokens * d; ++i) acc_pv[i] = static_cast<std::int64_t>(cd[i]);
      }

      for (std::size_t i = 0; i < tokens; ++i)
        for (std::size_t e = 0; e < d; ++e) {
          const std::int32_t level = requantize(acc_pv[i * d + e], pv_mult, 0.0f, ctx_qp);
          ctx[(w * tokens + i) * channels + h * d + e] = dequantize_value(level, ctx_qp);
        }
    }
  }
  return ctx;
}

EngineRuntime::EngineRuntime(const Engine& engine, KernelPath path) : plan_(engine.config) {
  engine.mode.validate();
  if (engine.mode.precision == Precision::int8)
    quant_ = std::make_unique<const QuantBackend>(engine, path);
  else
    float_ = std::make_unique<const FloatBackend<float>>(engine_weights(engine),
                                                         engine.mode.precision == Precision::fp16);
}

std::vector<float> EngineRuntime::forward(std::span<const float> image) const {
  if (quant_) return forward_with(*quant_, plan_, image);
  return forward_with(*float_, plan_, image);
}

std::vector<float> engine_forward(const Engine& engine, std::span<const float> image, KernelPath path) {
  return EngineRuntime(engine, path).forward(image);
}

}  // namespace swinq
