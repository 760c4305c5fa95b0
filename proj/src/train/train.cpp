#include "swinq/train/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "swinq/errors.hpp"
#include "swinq/parallel.hpp"
#include "swinq/train/backward.hpp"

namespace swinq {

TrainConfig TrainConfig::fine_tune() {
  TrainConfig c;
  c.learning_rate = 1e-5f;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0f)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0f)) throw ConfigError("Adam eps must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},   {"beta2", c.beta2},
                     {"eps", c.eps},                     {"epochs", c.epochs}, {"batch_size", c.batch_size},
                     {"seed", c.seed},                   {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.threads = j.value("threads", d.threads);
}

AdamState AdamState::for_params(const TypedParams<float>& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void adam_step(TypedParams<float>& params, const TypedParams<float>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.entries.size() != params.entries.size()) throw DimensionError("gradient does not mirror parameters");
  if (state.m.entries.empty()) state = AdamState::for_params(params);
  ++state.t;
  const double c1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t));
  for (std::size_t e = 0; e < params.entries.size(); ++e) {
    auto& p = params.entries[e].values;
    const auto& g = grads.entries[e].values;
    auto& m = state.m.entries[e].values;
    auto& v = state.v.entries[e].values;
    if (g.size() != p.size()) throw DimensionError("gradient shape mismatch for '" + params.entries[e].name + "'");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= static_cast<float>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state, const TrainConfig& cfg) {
  auto p = TypedParams<float>::from(params);
  adam_step(p, TypedParams<float>::from(grads), state, cfg);
  for (std::size_t e = 0; e < p.entries.size(); ++e)
    std::copy(p.entries[e].values.begin(), p.entries[e].values.end(), params.entries()[e].second.f32().begin());
}

BatchGradient batch_gradient(const std::vector<const Sample*>& batch, const ForwardPlan& plan,
                             const TypedParams<float>& params, std::size_t threads) {
  std::vector<TypedParams<float>> per(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    per[i] = params.zeros_like();
    losses[i] = accumulate_gradient<float>(batch[i]->pixels, batch[i]->label, plan, params, per[i]);
  });
  BatchGradient out;
  out.grads = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t e = 0; e < out.grads.entries.size(); ++e) {
      auto& dst = out.grads.entries[e].values;
      const auto& src = per[i].entries[e].values;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    out.loss += losses[i];
  }
  const float inv = static_cast<float>(batch.size());
  for (auto& e : out.grads.entries)
    for (float& v : e.values) v /= inv;
  out.loss /= static_cast<double>(batch.size());
  return out;
}

void to_json(nlohmann::json& j, const EpochMetrics& m) {
  j = nlohmann::json{
      {"epoch", m.epoch}, {"train_loss", m.train_loss}, {"val_accuracy", m.val_accuracy}, {"val_loss", m.val_loss}};
}

void from_json(const nlohmann::json& j, EpochMetrics& m) {
  j.at("epoch").get_to(m.epoch);
  j.at("train_loss").get_to(m.train_loss);
  j.at("val_accuracy").get_to(m.val_accuracy);
  m.val_loss = j.value("val_loss", 0.0);
}

std::size_t argmax(std::span<const float> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

namespace {

ParameterSet to_parameter_set(const TypedParams<float>& p, const ModelConfig& cfg) {
  ParameterSet ps = ParameterSet::zeros(cfg);
  for (std::size_t e = 0; e < p.entries.size(); ++e)
    std::copy(p.entries[e].values.begin(), p.entries[e].values.end(), ps.entries()[e].second.f32().begin());
  return ps;
}

}  // namespace

FloatEvaluation evaluate_float(const std::vector<Sample>& samples, const ModelConfig& cfg,
                               const ParameterSet& params, std::size_t threads) {
  const ForwardPlan plan(cfg);
  const FloatBackend<float> be(params);
  FloatEvaluation out;
  out.predictions.resize(samples.size());
  std::vector<double> losses(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto logits = forward_with(be, plan, std::span<const float>(samples[i].pixels));
    out.predictions[i] = argmax(logits);
    losses[i] = cross_entropy<float>(logits, samples[i].label);
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    correct += out.predictions[i] == samples[i].label;
    out.mean_loss += losses[i];
  }
  if (!samples.empty()) {
    out.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    out.mean_loss /= static_cast<double>(samples.size());
  }
  return out;
}

TrainResult train_loop(const std::vector<Sample>& train, const std::vector<Sample>& val, const ModelConfig& cfg,
                       const TrainConfig& tc, const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train.empty()) throw DataError("training split is empty");
  if (val.empty()) throw DataError("validation split is empty");
  tc.validate();
  const ForwardPlan plan(cfg);
  TypedParams<float> params = TypedParams<float>::from(ParameterSet::initialize(cfg, tc.seed));
  AdamState state = AdamState::for_params(params);
  std::mt19937_64 rng(tc.seed ^ 0x5eedf00dull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.params = to_parameter_set(params, cfg);
  bool have_best = false;
  double best_val_loss = 0.0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    // Fisher-Yates, explicit modulus.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + tc.batch_size); ++k)
        batch.push_back(&train[order[k]]);
      const BatchGradient bg = batch_gradient(batch, plan, params, tc.threads);
      loss_sum += bg.loss * static_cast<double>(batch.size());
      adam_step(params, bg.grads, state, tc);
    }
    const ParameterSet current = to_parameter_set(params, cfg);
    const FloatEvaluation ev = evaluate_float(val, cfg, current, tc.threads);
    EpochMetrics m{epoch, loss_sum / static_cast<double>(train.size()), ev.accuracy, ev.mean_loss};
    result.history.push_back(m);
    if (!have_best || m.val_accuracy > result.best_val_accuracy ||
        (m.val_accuracy == result.best_val_accuracy && m.val_loss < best_val_loss)) {
      best_val_loss = m.val_loss;
      have_best = true;
      result.best_val_accuracy = m.val_accuracy;
      result.best_epoch = epoch;
      result.params = current;
    }
    if (on_epoch) on_epoch(m);
  }
  return result;
}

}  // namespace swinq
