#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "biomm/params.hpp"
#include "biomm/tensor.hpp"

namespace biomm {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  /// Gradient of the last backward() target with respect to this node
  /// (empty when the node does not track gradients or was unreachable).
  std::span<const double> grad() const;
  bool requires_grad() const;

  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape for one forward computation. Nodes are appended in topological order,
/// so backward() is a single reverse sweep.
class Graph {
 public:
  /// Receives the gradient of the node being processed; accumulates into
  /// parent gradients obtained through Graph::grad_accumulator.
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var input(Tensor value);
  Var param(ParamStore& store, const std::string& name);

  /// Appends an op result. The node tracks gradients iff any parent does.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  /// Reverse sweep from a scalar node. Parameter gradients are added to the
  /// owning store's grad slots (callers zero them between steps).
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value(std::size_t id) const;
  std::span<const double> grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const;
  /// Zero-initialized on first use.
  std::span<double> grad_accumulator(Var v);

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    ParamStore* store = nullptr;
    bool requires_grad = false;
    const Tensor& value() const { return ref ? *ref : owned; }
  };
  Node& node(Var v);
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace biomm
