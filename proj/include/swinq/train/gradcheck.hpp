#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "swinq/model/forward.hpp"

namespace swinq {

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences for every scalar
/// parameter, in double precision. The step is h = step * max(1, |theta|);
/// relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult gradient_check(std::span<const double> image, std::size_t label, const ForwardPlan& plan,
                               const TypedParams<double>& params, double step = 1e-3, double floor = 1e-6);

}  // namespace swinq
