#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "biomm/params.hpp"

namespace biomm {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}

  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// One bias-corrected Adam update from the grad slots. Only parameters whose
/// name starts with one of `prefixes` are touched (all when empty). Consumes
/// the grads: a second call without a fresh backward pass is a usage error.
void adam_step(ParamStore& params, AdamState& state, const std::vector<std::string>& prefixes = {});

}  // namespace biomm
