#include "attnmask/graph.hpp"

#include <stdexcept>

namespace attnmask {

ParamId ParamStore::add(std::string name, Tensor value) {
  if (find(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return ParamId{values_.size() - 1};
}

std::optional<ParamId> ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return ParamId{i};
  }
  return std::nullopt;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(ParamId id) {
  if (params_ == nullptr) {
    throw std::logic_error("graph has no parameter store bound");
  }
  auto it = param_nodes_.find(id.index);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Var v = variable(params_->value(id));
  param_nodes_.emplace(id.index, v.id);
  return v;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw std::domain_error("non-finite value produced by graph operation");
  }
  Node node;
  node.value = std::move(value);
  node.backward = std::move(backward);
  for (const Var& in : inputs) {
    if (in.graph != this) {
      throw std::logic_error("operation mixes nodes from different graphs");
    }
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Graph::backward(Var output) {
  if (backward_done_) throw std::logic_error("backward already run on graph");
  if (nodes_[output.id].value.size() != 1) {
    throw std::invalid_argument("backward requires a scalar output, got " +
                                shape_string(nodes_[output.id].value.shape()));
  }
  backward_done_ = true;
  grads_.clear();
  has_grad_.assign(nodes_.size(), false);
  grads_.resize(nodes_.size());

  grads_[output.id] = Tensor(nodes_[output.id].value.shape(), 1.0);
  has_grad_[output.id] = true;

  // Creation order is a topological order, so a reverse scan visits every
  // node after all of its consumers.
  std::vector<Tensor*> slots;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!has_grad_[i] || !node.backward || !node.requires_grad) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (!has_grad_[in]) {
        grads_[in] = Tensor(nodes_[in].value.shape(), 0.0);
        has_grad_[in] = true;
      }
      slots[k] = &grads_[in];
    }
    node.backward(node.value, grads_[i], slots);
  }
}

Tensor Graph::grad(Var v) const {
  if (v.id < has_grad_.size() && has_grad_[v.id]) return grads_[v.id];
  return Tensor(nodes_[v.id].value.shape(), 0.0);
}

Tensor Graph::param_grad(ParamId id) const {
  auto it = param_nodes_.find(id.index);
  if (it == param_nodes_.end()) return Tensor(params_->value(id).shape(), 0.0);
  return grad(Var{const_cast<Graph*>(this), it->second});
}

std::vector<Tensor> Graph::param_grads() const {
  std::vector<Tensor> out;
  if (params_ == nullptr) return out;
  out.reserve(params_->size());
  for (std::size_t i = 0; i < params_->size(); ++i) {
    out.push_back(param_grad(ParamId{i}));
  }
  return out;
}

}  // namespace attnmask
