#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "adnet/params.hpp"
#include "adnet/tensor.hpp"

namespace adnet {

using NodeId = int;

// Reverse-mode tape. Operations append nodes in execution order; backward()
// seeds the scalar loss and replays the recorded rules in exact reverse order.
class Tape {
 public:
  struct Node {
    Tensor value;
    std::vector<double> grad;  // allocated on demand during backward
    bool requires_grad = false;
    std::string op;
    std::vector<NodeId> parents;
    std::function<void(Tape&, NodeId)> backward;  // scatter own grad into parents
    Param* bound = nullptr;                       // set for parameter leaves
  };

  NodeId constant(Tensor v, const char* op = "const") {
    return push(std::move(v), false, op, {}, nullptr);
  }

  NodeId leaf(Tensor v, const char* op = "leaf") {
    return push(std::move(v), true, op, {}, nullptr);
  }

  // Parameter leaf; backward() accumulates its gradient into p.grad.
  NodeId param(Param& p) {
    NodeId id = push(p.value, true, "param", {}, nullptr);
    nodes_[id].bound = &p;
    return id;
  }

  NodeId push(Tensor v, bool requires_grad, const char* op, std::vector<NodeId> parents,
              std::function<void(Tape&, NodeId)> bw) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    n.op = op;
    n.parents = std::move(parents);
    n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  // Result node of an op: requires grad iff any parent does.
  NodeId record(Tensor v, const char* op, std::vector<NodeId> parents,
                std::function<void(Tape&, NodeId)> bw) {
    bool rg = false;
    for (NodeId p : parents) rg = rg || nodes_[p].requires_grad;
    return push(std::move(v), rg, op, std::move(parents), rg ? std::move(bw) : nullptr);
  }

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  Tensor& value(NodeId id) { return nodes_[id].value; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t node_count() const { return nodes_.size(); }

  std::vector<double>& grad_buf(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  // Gradient of the last backward() target w.r.t. node id.
  const std::vector<double>& grad(NodeId id) const { return nodes_[id].grad; }

  void backward(NodeId loss) {
    if (nodes_[loss].value.size() != 1)
      throw ContractViolation("backward: loss node must be scalar");
    grad_buf(loss)[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, id);
      if (n.bound) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad.data[i] += n.grad[i];
      }
    }
  }

  // Name of the first recorded node holding a non-finite value, or "".
  std::string first_non_finite() const {
    for (const Node& n : nodes_)
      for (double v : n.value.data)
        if (!std::isfinite(v)) return n.op;
    return "";
  }

 private:
  std::deque<Node> nodes_;
};

}  // namespace adnet
