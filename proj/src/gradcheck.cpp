#include "biomm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "biomm/error.hpp"

namespace biomm {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

double eval_inputs(const std::vector<Tensor>& inputs, const InputLossFn& loss) {
  Graph g;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  return loss(g, vars).value().item();
}

}  // namespace

GradcheckResult check_input_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                      const InputLossFn& loss, double h) {
  GradcheckResult result{name, 0.0, 0};
  std::vector<std::vector<double>> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.input(t));
    Var out = loss(g, vars);
    g.backward(out);
    for (const Var& v : vars) {
      auto grad = v.grad();
      analytic.emplace_back(grad.begin(), grad.end());
      if (analytic.back().empty()) analytic.back().assign(v.size(), 0.0);
    }
  }
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const double orig = probe[i][k];
      probe[i][k] = orig + h;
      const double up = eval_inputs(probe, loss);
      probe[i][k] = orig - h;
      const double down = eval_inputs(probe, loss);
      probe[i][k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i][k], numeric));
      ++result.elements;
    }
  }
  return result;
}

GradcheckResult check_param_gradients(const std::string& name, ParamStore& store, const ParamLossFn& loss,
                                      double h, std::size_t max_per_param) {
  GradcheckResult result{name, 0.0, 0};
  store.zero_grad();
  {
    Graph g;
    g.backward(loss(g, store));
  }
  auto eval = [&]() {
    Graph g;
    return loss(g, store).value().item();
  };
  for (auto& [pname, p] : store) {
    const std::size_t n = p.value.size();
    const std::size_t step = (max_per_param == 0 || n <= max_per_param) ? 1 : n / max_per_param;
    for (std::size_t k = 0; k < n; k += step) {
      const double orig = p.value[k];
      p.value[k] = orig + h;
      const double up = eval();
      p.value[k] = orig - h;
      const double down = eval();
      p.value[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(p.grad[k], numeric));
      ++result.elements;
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace biomm
