#include "biomm/graph.hpp"

#include "biomm/error.hpp"

namespace biomm {

const Tensor& Var::value() const {
  if (!graph_) throw UsageError("use of an empty Var");
  return graph_->value(id_);
}

std::span<const double> Var::grad() const {
  if (!graph_) throw UsageError("use of an empty Var");
  return graph_->grad(id_);
}

bool Var::requires_grad() const { return graph_ && graph_->requires_grad(id_); }

Var Graph::constant(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var(this, nodes_.size() - 1);
}

Var Graph::input(Tensor value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(ParamStore& store, const std::string& name) {
  Parameter& p = store.at(name);
  Node& n = nodes_.emplace_back();
  n.ref = &p.value;
  n.param = &p;
  n.store = &store;
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn backward) {
  bool track = false;
  for (const Var& p : parents) {
    if (p.graph_ != this) throw UsageError("op mixes nodes from different graphs");
    track = track || nodes_[p.id_].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.requires_grad = track;
  if (track) n.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

Graph::Node& Graph::node(Var v) {
  if (v.graph_ != this) throw UsageError("Var does not belong to this graph");
  return nodes_[v.id_];
}

const Tensor& Graph::value(std::size_t id) const { return nodes_.at(id).value(); }

std::span<const double> Graph::grad(std::size_t id) const { return nodes_.at(id).grad; }

bool Graph::requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

std::span<double> Graph::grad_accumulator(Var v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad.assign(n.value().size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  Node& root = node(loss);
  if (root.value().size() != 1)
    throw UsageError("backward() needs a scalar loss, got shape " + shape_string(root.value().shape()));
  if (backward_done_) throw UsageError("backward() already ran on this graph");
  backward_done_ = true;

  for (Node& n : nodes_)
    if (n.store) n.store->set_grads_populated(true);
  if (!root.requires_grad) return;

  grad_accumulator(loss)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param) {
      auto& dst = n.param->grad;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

}  // namespace biomm
