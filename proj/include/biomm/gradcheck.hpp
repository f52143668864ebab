#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "biomm/graph.hpp"

namespace biomm {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
  bool passed(double tol = kGradcheckTolerance) const { return max_rel_error <= tol; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
/// roundoff in near-zero gradients from dominating.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Builds a scalar loss from graph inputs.
using InputLossFn = std::function<Var(Graph&, std::span<const Var>)>;
/// Builds a scalar loss that reads parameters from a store.
using ParamLossFn = std::function<Var(Graph&, ParamStore&)>;

/// Central differences over every element of every input tensor.
GradcheckResult check_input_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                      const InputLossFn& loss, double h = kGradcheckStep);

/// Central differences over the parameters of `store` (every element when
/// `max_per_param` is 0, otherwise an evenly spaced subset).
GradcheckResult check_param_gradients(const std::string& name, ParamStore& store, const ParamLossFn& loss,
                                      double h = kGradcheckStep, std::size_t max_per_param = 0);

}  // namespace biomm
