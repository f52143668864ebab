#include "biomm/adam.hpp"

#include <algorithm>
#include <cmath>

#include "biomm/error.hpp"

namespace biomm {

void adam_step(ParamStore& params, AdamState& state, const std::vector<std::string>& prefixes) {
  if (!params.grads_populated()) throw UsageError("adam_step: gradients have not been populated by backward()");
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params) {
    if (!prefixes.empty() &&
        std::none_of(prefixes.begin(), prefixes.end(), [&](const std::string& pre) { return name.rfind(pre, 0) == 0; }))
      continue;
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(p.value.size(), 0.0);
      v.assign(p.value.size(), 0.0);
    }
    if (m.size() != p.value.size())
      throw DimensionError("adam_step: moment size mismatch for '" + name + "'");
    double* w = p.value.data();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double g = p.grad[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double mhat = m[i] / correct1;
      const double vhat = v[i] / correct2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
  params.set_grads_populated(false);
}

}  // namespace biomm
