#pragma once

#include "swinq/tensor/tensor.hpp"

namespace swinq {

inline constexpr float kLayerNormEps = 1e-5f;

/// [m,k] x [k,n] -> [m,n], f32 accumulation. Throws DimensionError.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax along the last axis.
Tensor softmax(const Tensor& x);

/// LayerNorm along the last axis (population variance).
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 float eps = kLayerNormEps);

Tensor gelu(const Tensor& x);

}  // namespace swinq
