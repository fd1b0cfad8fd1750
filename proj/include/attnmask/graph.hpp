#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "attnmask/tensor.hpp"

namespace attnmask {

struct ParamId {
  std::size_t index = 0;
  friend bool operator==(ParamId a, ParamId b) { return a.index == b.index; }
};

// Named trainable tensors. Blocks hold ParamIds; a Graph binds them as leaves.
class ParamStore {
 public:
  ParamId add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const Tensor& value(ParamId id) const { return values_[id.index]; }
  Tensor& value(ParamId id) { return values_[id.index]; }
  const std::string& name(ParamId id) const { return names_[id.index]; }
  std::optional<ParamId> find(const std::string& name) const;

  // Total number of scalar parameters.
  std::size_t count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the Graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Receives the node's output value and gradient, plus one gradient slot per
// input (nullptr when that input does not require a gradient). Implementations
// accumulate into the slots.
using BackwardFn = std::function<void(const Tensor& out, const Tensor& grad_out,
                                      std::span<Tensor* const> grad_in)>;

// Operation tape for reverse-mode differentiation. Confined to one thread.
class Graph {
 public:
  explicit Graph(const ParamStore* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient (images, targets).
  Var constant(Tensor value);
  // Leaf that receives a gradient.
  Var variable(Tensor value);
  // Leaf bound to a parameter; one node per ParamId per graph.
  Var param(ParamId id);

  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Reverse sweep from a scalar output. May be called once per graph.
  void backward(Var output);

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  // Gradient of the last backward output w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const;
  // Gradient per parameter of the bound store, zeros for unused parameters.
  std::vector<Tensor> param_grads() const;
  Tensor param_grad(ParamId id) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const ParamStore* params_;
  std::deque<Node> nodes_;
  std::deque<Tensor> grads_;
  std::vector<bool> has_grad_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace attnmask
