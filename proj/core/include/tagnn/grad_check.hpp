#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tagnn/tensor.hpp"

namespace tagnn {

/// Central finite differences against an analytic gradient.
///
/// `loss_of` must evaluate the scalar loss from scratch for the given
/// parameter values. Runs in double regardless of the training scalar type;
/// the step size is clamped to [1e-6, 1e-4], anything outside drowns in
/// either roundoff or truncation error.
///
/// The relative error uses denominator max(|analytic|, |numeric|, floor).
/// Central differences on a double loss carry ~eps*|loss|/(2h) =~ 1e-11 of
/// absolute noise, so coordinates smaller than the floor are effectively
/// compared absolutely at floor scale; a floor below ~1e-7 would flag that
/// noise as error on near-zero gradient entries.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "name[flat_index]" of the worst coordinate
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct GradCheckInput {
  std::string name;
  Tensor64* value;          // perturbed in place, restored afterwards
  const Tensor64* analytic; // gradient to validate, same shape
};

inline GradCheckResult grad_check(const std::function<double()>& loss_of,
                                  const std::vector<GradCheckInput>& inputs, double h = 1e-5,
                                  double floor = 1e-6) {
  if (h < 1e-6 || h > 1e-4)
    raise(ErrorKind::contract, "finite-difference step " + std::to_string(h) + " outside [1e-6, 1e-4]");
  if (floor <= 0.0) raise(ErrorKind::contract, "relative-error floor must be positive");
  GradCheckResult r;
  for (const GradCheckInput& in : inputs) {
    if (!in.value->same_shape(*in.analytic))
      raise(ErrorKind::dimension, "gradient shape mismatch for " + in.name);
    for (size_t i = 0; i < in.value->data.size(); ++i) {
      const double saved = in.value->data[i];
      in.value->data[i] = saved + h;
      const double up = loss_of();
      in.value->data[i] = saved - h;
      const double down = loss_of();
      in.value->data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = in.analytic->data[i];
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
      const double rel = std::fabs(analytic - numeric) / denom;
      if (rel > r.max_rel_err) {
        r.max_rel_err = rel;
        r.worst = in.name + "[" + std::to_string(i) + "]";
        r.analytic_at_worst = analytic;
        r.numeric_at_worst = numeric;
      }
    }
  }
  return r;
}

}  // namespace tagnn
