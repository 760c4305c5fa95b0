#include "swinq/train/gradcheck.hpp"

#include <cmath>

#include "swinq/train/backward.hpp"

namespace swinq {

GradCheckResult gradient_check(std::span<const double> image, std::size_t label, const ForwardPlan& plan,
                               const TypedParams<double>& params, double step, double floor) {
  const auto analytic = backward_values<double>(image, label, plan, params);
  TypedParams<double> probe = params;
  auto loss_at = [&]() {
    const auto logits = forward_values<double>(image, plan, probe);
    return cross_entropy<double>(logits, label);
  };
  GradCheckResult r;
  for (std::size_t e = 0; e < probe.entries.size(); ++e) {
    auto& values = probe.entries[e].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double theta = values[i];
      const double h = step * std::max(1.0, std::abs(theta));
      values[i] = theta + h;
      const double up = loss_at();
      values[i] = theta - h;
      const double down = loss_at();
      values[i] = theta;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.grads.entries[e].values[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      if (rel > r.max_rel_error || r.checked == 0) {
        r.max_rel_error = rel;
        r.worst_param = probe.entries[e].name;
        r.worst_index = i;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
      ++r.checked;
    }
  }
  return r;
}

}  // namespace swinq
