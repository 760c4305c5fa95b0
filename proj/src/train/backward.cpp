#include "swinq/train/backward.hpp"

#include <cmath>
#include <unordered_map>

#include "swinq/errors.hpp"
#include "swinq/tensor/kernels.hpp"

namespace swinq {

template <class T>
T cross_entropy(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size())
    throw DomainError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                      " classes");
  T mx = logits[0];
  for (T v : logits) mx = std::max(mx, v);
  T sum = T(0);
  for (T v : logits) sum += std::exp(v - mx);
  return std::log(sum) + mx - logits[label];
}

template <class T>
std::vector<T> cross_entropy_grad(std::span<const T> logits, std::size_t label) {
  if (label >= logits.size()) throw DomainError("label out of range");
  std::vector<T> g(logits.begin(), logits.end());
  kernels::softmax_rows<T>(g, g.size());
  g[label] -= T(1);
  return g;
}

namespace {

template <class T>
struct Param {
  const std::vector<T>* value = nullptr;
  std::vector<T>* grad = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

template <class T>
struct LnCache {
  std::vector<T> xhat;
  std::vector<T> rstd;
};

template <class T>
struct BlockCache {
  LnCache<T> ln1, ln2;
  std::vector<T> hw, qkv, probs, ctx, h2, m_pre, m_act;
};

template <class T>
struct MergeCache {
  LnCache<T> ln;
  std::vector<T> h;
};

template <class T>
class Tape {
 public:
  Tape(const ForwardPlan& plan, const TypedParams<T>& params, TypedParams<T>& grads) : plan_(plan) {
    if (grads.entries.size() != params.entries.size()) throw DimensionError("gradient buffer does not mirror params");
    for (std::size_t i = 0; i < params.entries.size(); ++i) {
      const auto& e = params.entries[i];
      Param<T> p{&e.values, &grads.entries[i].values, e.shape[0], e.shape.size() == 2 ? e.shape[1] : 1};
      index_.emplace(e.name, p);
    }
  }

  T run(std::span<const T> image, std::size_t label, std::vector<T>* logits_out) {
    const ModelConfig& cfg = plan_.cfg;
    if (image.size() != cfg.image_size * cfg.image_size * cfg.in_channels)
      throw DimensionError("image does not match the model input size");
    const std::size_t n0 = cfg.stage_grid(0) * cfg.stage_grid(0);

    // forward
    patches_ = gather_elements<T>(image, plan_.patch_index);
    std::vector<T> x = linear("patch_embed", patches_, n0);
    blocks_.assign(cfg.num_stages(), {});
    merges_.assign(cfg.num_stages(), {});
    for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
      blocks_[s].resize(cfg.depths[s]);
      for (std::size_t b = 0; b < cfg.depths[s]; ++b) block_forward(s, b, x);
      if (s + 1 < cfg.num_stages()) x = merge_forward(s, x);
    }
    const std::size_t c = cfg.final_dim();
    const std::size_t n = x.size() / c;
    std::vector<T> pooled(c, T(0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) pooled[j] += x[r * c + j];
    for (T& v : pooled) v /= static_cast<T>(n);
    std::vector<T> hf = layernorm("final_norm.gamma", "final_norm.beta", pooled, final_ln_);
    head_in_ = hf;
    std::vector<T> logits = linear("head", hf, 1);
    const T loss = cross_entropy<T>(logits, label);
    if (logits_out) *logits_out = logits;

    // backward
    std::vector<T> d = cross_entropy_grad<T>(logits, label);
    std::vector<T> dh = linear_backward("head", head_in_, d, 1);
    std::vector<T> dpooled = layernorm_backward("final_norm.gamma", "final_norm.beta", final_ln_, dh);
    std::vector<T> dx(n * c);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) dx[r * c + j] = dpooled[j] / static_cast<T>(n);
    for (std::size_t s = cfg.num_stages(); s-- > 0;) {
      if (s + 1 < cfg.num_stages()) dx = merge_backward(s, dx);
      for (std::size_t b = cfg.depths[s]; b-- > 0;) block_backward(s, b, dx);
    }
    linear_backward("patch_embed", patches_, dx, n0, false);
    return loss;
  }

 private:
  const Param<T>& param(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<T> linear(const std::string& layer, std::span<const T> x, std::size_t rows) {
    const Param<T>& w = param(layer + ".weight");
    std::vector<T> wt(w.value->size());
    kernels::transpose<T>(*w.value, w.rows, w.cols, wt);
    std::span<const T> bias;
    if (has(layer + ".bias")) bias = *param(layer + ".bias").value;
    std::vector<T> y(rows * w.rows);
    kernels::linear_t<T>(x, rows, w.cols, wt, bias, w.rows, y);
    return y;
  }

  // Accumulates weight/bias gradients; returns dx unless `want_dx` is false.
  std::vector<T> linear_backward(const std::string& layer, std::span<const T> x, std::span<const T> dy,
                                 std::size_t rows, bool want_dx = true) {
    const Param<T>& w = param(layer + ".weight");
    const std::size_t out = w.rows, in = w.cols;
    std::vector<T>& gw = *w.grad;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out; ++o) {
        const T g = dy[r * out + o];
        if (g == T(0)) continue;
        T* row = gw.data() + o * in;
        const T* xr = x.data() + r * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += g * xr[i];
      }
    if (has(layer + ".bias")) {
      std::vector<T>& gb = *param(layer + ".bias").grad;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < out; ++o) gb[o] += dy[r * out + o];
    }
    if (!want_dx) return {};
    std::vector<T> dx(rows * in);
    kernels::matmul<T>(dy, *w.value, dx, rows, out, in);
    return dx;
  }

  std::vector<T> layernorm(const std::string& gamma, const std::string& beta, std::span<const T> x, LnCache<T>& cache) {
    const auto& g = *param(gamma).value;
    const auto& b = *param(beta).value;
    const std::size_t c = g.size(), rows = x.size() / c;
    cache.xhat.resize(x.size());
    cache.rstd.resize(rows);
    std::vector<T> y(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = x.data() + r * c;
      T mean = T(0);
      for (std::size_t j = 0; j < c; ++j) mean += xr[j];
      mean /= static_cast<T>(c);
      T var = T(0);
      for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<T>(c);
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(1e-5));
      cache.rstd[r] = rstd;
      for (std::size_t j = 0; j < c; ++j) {
        const T xh = (xr[j] - mean) * rstd;
        cache.xhat[r * c + j] = xh;
        y[r * c + j] = xh * g[j] + b[j];
      }
    }
    return y;
  }

  std::vector<T> layernorm_backward(const std::string& gamma, const std::string& beta, const LnCache<T>& cache,
                                    std::span<const T> dy) {
    const Param<T>& pg = param(gamma);
    const Param<T>& pb = param(beta);
    const auto& g = *pg.value;
    const std::size_t c = g.size(), rows = dy.size() / c;
    std::vector<T> dx(dy.size());
    std::vector<T> dxh(c);
    for (std::size_t r = 0; r < rows; ++r) {
      T mean_d = T(0), mean_dx = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        const T d = dy[r * c + j];
        const T xh = cache.xhat[r * c + j];
        (*pg.grad)[j] += d * xh;
        (*pb.grad)[j] += d;
        dxh[j] = d * g[j];
        mean_d += dxh[j];
        mean_dx += dxh[j] * xh;
      }
      mean_d /= static_cast<T>(c);
      mean_dx /= static_cast<T>(c);
      for (std::size_t j = 0; j < c; ++j)
        dx[r * c + j] = cache.rstd[r] * (dxh[j] - mean_d - cache.xhat[r * c + j] * mean_dx);
    }
    return dx;
  }

  void block_forward(std::size_t s, std::size_t b, std::vector<T>& x) {
    const StagePlan& sp = plan_.stages[s];
    BlockCache<T>& bc = blocks_[s][b];
    const std::string p = block_prefix(s, b);
    const std::size_t n = sp.grid * sp.grid, c = sp.channels, tokens = sp.window * sp.window;
    const bool shifted = b % 2 == 1;
    const auto& index = shifted ? sp.shifted_index : sp.plain_index;
    std::vector<T> h = layernorm(p + ".ln1.weight", p + ".ln1.bias", x, bc.ln1);
    bc.hw = gather_rows<T>(h, c, index);
    bc.qkv = linear(p + ".qkv", bc.hw, n);
    bc.ctx = window_attention_core<T>(bc.qkv, n / tokens, tokens, c, sp.heads, shifted ? &sp.mask : nullptr,
                                      &bc.probs);
    std::vector<T> o = scatter_rows<T>(linear(p + ".proj", bc.ctx, n), c, index);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];
    bc.h2 = layernorm(p + ".ln2.weight", p + ".ln2.bias", x, bc.ln2);
    bc.m_pre = linear(p + ".mlp1", bc.h2, n);
    bc.m_act = bc.m_pre;
    kernels::gelu_inplace<T>(bc.m_act);
    o = linear(p + ".mlp2", bc.m_act, n);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];
  }

  void block_backward(std::size_t s, std::size_t b, std::vector<T>& dx) {
    const StagePlan& sp = plan_.stages[s];
    const BlockCache<T>& bc = blocks_[s][b];
    const std::string p = block_prefix(s, b);
    const std::size_t n = sp.grid * sp.grid, c = sp.channels, tokens = sp.window * sp.window;
    const auto& index = b % 2 == 1 ? sp.shifted_index : sp.plain_index;

    std::vector<T> dm = linear_backward(p + ".mlp2", bc.m_act, dx, n);
    for (std::size_t i = 0; i < dm.size(); ++i) dm[i] *= kernels::gelu_grad(bc.m_pre[i]);
    std::vector<T> dh2 = linear_backward(p + ".mlp1", bc.h2, dm, n);
    std::vector<T> dln2 = layernorm_backward(p + ".ln2.weight", p + ".ln2.bias", bc.ln2, dh2);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dln2[i];

    std::vector<T> dout = gather_rows<T>(dx, c, index);
    std::vector<T> dctx = linear_backward(p + ".proj", bc.ctx, dout, n);
    std::vector<T> dqkv = attention_backward(bc, dctx, n / tokens, tokens, c, sp.heads);
    std::vector<T> dhw = linear_backward(p + ".qkv", bc.hw, dqkv, n);
    std::vector<T> dh = scatter_rows<T>(dhw, c, index);
    std::vector<T> dln1 = layernorm_backward(p + ".ln1.weight", p + ".ln1.bias", bc.ln1, dh);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dln1[i];
  }

  std::vector<T> attention_backward(const BlockCache<T>& bc, std::span<const T> dctx, std::size_t windows,
                                    std::size_t tokens, std::size_t c, std::size_t heads) {
    const std::size_t d = c / heads, stride = 3 * c;
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    std::vector<T> dqkv(bc.qkv.size(), T(0));
    std::vector<T> dp(tokens * tokens);
    for (std::size_t w = 0; w < windows; ++w) {
      const T* base = bc.qkv.data() + w * tokens * stride;
      T* dbase = dqkv.data() + w * tokens * stride;
      for (std::size_t h = 0; h < heads; ++h) {
        const T* pr = bc.probs.data() + (w * heads + h) * tokens * tokens;
        // dP = dO V^T ; dV = P^T dO
        for (std::size_t i = 0; i < tokens; ++i) {
          const T* dout = dctx.data() + (w * tokens + i) * c + h * d;
          for (std::size_t j = 0; j < tokens; ++j) {
            const T* v = base + j * stride + 2 * c + h * d;
            dp[i * tokens + j] = kernels::dot(dout, v, d);
            T* dv = dbase + j * stride + 2 * c + h * d;
            const T pij = pr[i * tokens + j];
            for (std::size_t e = 0; e < d; ++e) dv[e] += pij * dout[e];
          }
        }
        // dS = P * (dP - rowsum(P * dP)), then dQ = dS K s, dK = dS^T Q s
        for (std::size_t i = 0; i < tokens; ++i) {
          T dotp = T(0);
          for (std::size_t j = 0; j < tokens; ++j) dotp += pr[i * tokens + j] * dp[i * tokens + j];
          const T* q = base + i * stride + h * d;
          T* dq = dbase + i * stride + h * d;
          for (std::size_t j = 0; j < tokens; ++j) {
            const T ds = pr[i * tokens + j] * (dp[i * tokens + j] - dotp) * scale;
            if (ds == T(0)) continue;
            const T* k = base + j * stride + c + h * d;
            T* dk = dbase + j * stride + c + h * d;
            for (std::size_t e = 0; e < d; ++e) {
              dq[e] += ds * k[e];
              dk[e] += ds * q[e];
            }
          }
        }
      }
    }
    return dqkv;
  }

  std::vector<T> merge_forward(std::size_t s, std::span<const T> x) {
    const std::string p = merge_prefix(s);
    const std::size_t g = plan_.stages[s].grid / 2;
    std::vector<T> cat = gather_elements<T>(x, plan_.merge_index[s]);
    merges_[s].h = layernorm(p + ".norm.weight", p + ".norm.bias", cat, merges_[s].ln);
    return linear(p + ".reduce", merges_[s].h, g * g);
  }

  std::vector<T> merge_backward(std::size_t s, std::span<const T> dy) {
    const std::string p = merge_prefix(s);
    const std::size_t g = plan_.stages[s].grid / 2;
    std::vector<T> dh = linear_backward(p + ".reduce", merges_[s].h, dy, g * g);
    std::vector<T> dcat = layernorm_backward(p + ".norm.weight", p + ".norm.bias", merges_[s].ln, dh);
    const auto& index = plan_.merge_index[s];
    std::vector<T> dx(index.size());
    for (std::size_t k = 0; k < index.size(); ++k) dx[index[k]] = dcat[k];
    return dx;
  }

  const ForwardPlan& plan_;
  std::unordered_map<std::string, Param<T>> index_;
  std::vector<T> patches_, head_in_;
  std::vector<std::vector<BlockCache<T>>> blocks_;
  std::vector<MergeCache<T>> merges_;
  LnCache<T> final_ln_;
};

}  // namespace

template <class T>
T accumulate_gradient(std::span<const T> image, std::size_t label, const ForwardPlan& plan,
                      const TypedParams<T>& params, TypedParams<T>& grads, std::vector<T>* logits) {
  Tape<T> tape(plan, params, grads);
  return tape.run(image, label, logits);
}

template <class T>
LossGradient<T> backward_values(std::span<const T> image, std::size_t label, const ForwardPlan& plan,
                                const TypedParams<T>& params) {
  LossGradient<T> out;
  out.grads = params.zeros_like();
  out.loss = accumulate_gradient<T>(image, label, plan, params, out.grads, &out.logits);
  return out;
}

ParameterSet backward(const Tensor& image, std::size_t label, const ModelConfig& cfg, const ParameterSet& params) {
  const ForwardPlan plan(cfg);
  const auto typed = TypedParams<float>::from(params);
  const auto lg = backward_values<float>(image.f32(), label, plan, typed);
  ParameterSet grads = ParameterSet::zeros(cfg);
  for (std::size_t i = 0; i < lg.grads.entries.size(); ++i) {
    auto dst = grads.entries()[i].second.f32();
    std::copy(lg.grads.entries[i].values.begin(), lg.grads.entries[i].values.end(), dst.begin());
  }
  return grads;
}

float cross_entropy(const Tensor& logits, std::size_t label) { return cross_entropy<float>(logits.f32(), label); }

template float cross_entropy<float>(std::span<const float>, std::size_t);
template double cross_entropy<double>(std::span<const double>, std::size_t);
template std::vector<float> cross_entropy_grad<float>(std::span<const float>, std::size_t);
template std::vector<double> cross_entropy_grad<double>(std::span<const double>, std::size_t);
template float accumulate_gradient<float>(std::span<const float>, std::size_t, const ForwardPlan&,
                                          const TypedParams<float>&, TypedParams<float>&, std::vector<float>*);
template double accumulate_gradient<double>(std::span<const double>, std::size_t, const ForwardPlan&,
                                            const TypedParams<double>&, TypedParams<double>&, std::vector<double>*);
template LossGradient<float> backward_values<float>(std::span<const float>, std::size_t, const ForwardPlan&,
                                                    const TypedParams<float>&);
template LossGradient<double> backward_values<double>(std::span<const double>, std::size_t, const ForwardPlan&,
                                                      const TypedParams<double>&);

}  // namespace swinq
