#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "medvsr/tensor.hpp"

namespace medvsr {

// Tape-based reverse-mode autodiff. Nodes are appended in evaluation order,
// so walking the tape backwards is a reverse topological order. Values and
// gradients live in the graph arena; ops reference nodes by index.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  int leaf(Tensor<T> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad, nullptr});
    return int(nodes_.size()) - 1;
  }

  // Memoized leaf for a parameter tensor: repeated uses inside one graph map
  // to a single node so gradients accumulate across all uses.
  int param(Tensor<T>& t) {
    auto it = param_ids_.find(&t);
    if (it != param_ids_.end()) return it->second;
    int id = leaf(t, true);
    param_ids_.emplace(&t, id);
    return id;
  }

  int constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool has_param(const Tensor<T>& t) const {
    return param_ids_.count(&t) != 0;
  }
  int param_id(const Tensor<T>& t) const {
    auto it = param_ids_.find(&t);
    require(it != param_ids_.end(), "graph: tensor has no parameter node");
    return it->second;
  }

  int add_node(Tensor<T> value, const std::vector<int>& parents,
               BackwardFn backward) {
    bool needs = false;
    for (int p : parents) {
      require(p >= 0 && p < int(nodes_.size()), "graph: bad parent id");
      needs = needs || nodes_[size_t(p)].needs_grad;
    }
    nodes_.push_back(
        Node{std::move(value), Tensor<T>(), needs,
             needs ? std::move(backward) : BackwardFn(nullptr)});
    return int(nodes_.size()) - 1;
  }

  const Tensor<T>& val(int id) const { return nodes_[size_t(id)].value; }
  Tensor<T>& val_mut(int id) { return nodes_[size_t(id)].value; }

  bool needs_grad(int id) const { return nodes_[size_t(id)].needs_grad; }

  // Gradient accumulator; allocates zeros on first touch.
  Tensor<T>& grad_acc(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(int id) const { return !nodes_[size_t(id)].grad.empty(); }
  const Tensor<T>& grad(int id) const { return nodes_[size_t(id)].grad; }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse.
  void backward(int root) {
    require(root >= 0 && root < int(nodes_.size()), "backward: bad root id");
    grad_acc(root).fill(T(1));
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  const Tensor<T>* grad_of(const Tensor<T>& param) const {
    auto it = param_ids_.find(&param);
    if (it == param_ids_.end()) return nullptr;
    const Node& n = nodes_[size_t(it->second)];
    return n.grad.empty() ? nullptr : &n.grad;
  }

  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_ids_.clear();
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> param_ids_;
};

}  // namespace medvsr
