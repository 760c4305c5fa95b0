#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "swinq/model/forward.hpp"
#include "swinq/model/params.hpp"
#include "swinq/tensor/tensor.hpp"

namespace swinq {

/// -log softmax(logits)[label] via log-sum-exp. Throws DomainError on a bad label.
template <class T>
T cross_entropy(std::span<const T> logits, std::size_t label);

/// softmax(logits) - onehot(label).
template <class T>
std::vector<T> cross_entropy_grad(std::span<const T> logits, std::size_t label);

template <class T>
struct LossGradient {
  T loss = T(0);
  std::vector<T> logits;
  TypedParams<T> grads;
};

/// Reverse-mode gradients of cross_entropy(forward(image), label) with
/// respect to every parameter, accumulated into `grads` (which must mirror
/// `params`). Returns the loss and logits.
template <class T>
T accumulate_gradient(std::span<const T> image, std::size_t label, const ForwardPlan& plan,
                      const TypedParams<T>& params, TypedParams<T>& grads, std::vector<T>* logits = nullptr);

template <class T>
LossGradient<T> backward_values(std::span<const T> image, std::size_t label, const ForwardPlan& plan,
                                const TypedParams<T>& params);

/// f32 gradient of one example as a ParameterSet with the model's names.
ParameterSet backward(const Tensor& image, std::size_t label, const ModelConfig& cfg, const ParameterSet& params);

/// Float Tensor convenience wrapper.
float cross_entropy(const Tensor& logits, std::size_t label);

}  // namespace swinq
