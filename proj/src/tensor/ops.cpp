#include "swinq/tensor/ops.hpp"

#include <vector>

#include "swinq/errors.hpp"
#include "swinq/tensor/kernels.hpp"

namespace swinq {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> c(m * n);
  kernels::matmul<float>(a.f32(), b.f32(), c, m, k, n);
  return Tensor::from_f32({m, n}, std::move(c));
}

Tensor softmax(const Tensor& x) {
  if (x.ndim() == 0) throw DimensionError("softmax: scalar input");
  std::vector<float> y(x.f32().begin(), x.f32().end());
  kernels::softmax_rows<float>(y, x.shape().back());
  return Tensor::from_f32(x.shape(), std::move(y));
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.ndim() == 0) throw DimensionError("layernorm: scalar input");
  const std::size_t c = x.shape().back();
  if (gamma.numel() != c || beta.numel() != c)
    throw DimensionError("layernorm: affine parameters must have " + std::to_string(c) + " elements");
  if (!(eps > 0.0f)) throw DomainError("layernorm: eps must be positive");
  std::vector<float> y(x.numel());
  kernels::layernorm_rows<float>(x.f32(), c, gamma.f32(), beta.f32(), eps, y);
  return Tensor::from_f32(x.shape(), std::move(y));
}

Tensor gelu(const Tensor& x) {
  std::vector<float> y(x.f32().begin(), x.f32().end());
  kernels::gelu_inplace<float>(y);
  return Tensor::from_f32(x.shape(), std::move(y));
}

}  // namespace swinq
