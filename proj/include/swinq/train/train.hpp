#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "swinq/data/sample.hpp"
#include "swinq/model/config.hpp"
#include "swinq/model/forward.hpp"
#include "swinq/model/params.hpp"

namespace swinq {

struct TrainConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Learning rate used when fine-tuning pretrained weights.
  static TrainConfig fine_tune();
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct AdamState {
  TypedParams<float> m;
  TypedParams<float> v;
  std::uint64_t t = 0;

  static AdamState for_params(const TypedParams<float>& params);
};

/// Bias-corrected Adam update of `params` in place.
void adam_step(TypedParams<float>& params, const TypedParams<float>& grads, AdamState& state, const TrainConfig& cfg);
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, const TrainConfig& cfg);

/// Mean gradient over `batch` (summed in batch order, then divided), plus the
/// mean loss. Per-example work fans out over `threads`.
struct BatchGradient {
  TypedParams<float> grads;
  double loss = 0.0;
};
BatchGradient batch_gradient(const std::vector<const Sample*>& batch, const ForwardPlan& plan,
                             const TypedParams<float>& params, std::size_t threads);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};
void to_json(nlohmann::json& j, const EpochMetrics& m);
void from_json(const nlohmann::json& j, EpochMetrics& m);

struct TrainResult {
  ParameterSet params;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

/// Trains from a seeded initialization for a fixed epoch budget and returns
/// the parameters of the best validation-accuracy epoch; ties go to the
/// lower validation loss.
TrainResult train_loop(const std::vector<Sample>& train, const std::vector<Sample>& val, const ModelConfig& cfg,
                       const TrainConfig& tc, const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct FloatEvaluation {
  std::vector<std::size_t> predictions;
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Top-1 predictions, accuracy and mean cross-entropy of float parameters.
FloatEvaluation evaluate_float(const std::vector<Sample>& samples, const ModelConfig& cfg,
                               const ParameterSet& params, std::size_t threads = 1);

std::size_t argmax(std::span<const float> v);

}  // namespace swinq
