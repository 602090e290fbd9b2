#include "mozoo/autograd.hpp"

#include "mozoo/errors.hpp"

namespace mozoo {

void Node::accumulate(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw DimensionError("gradient " + shape_str(g.shape()) + " for value " +
                         shape_str(value.shape()) + (name.empty() ? "" : " (" + name + ")"));
  }
  if (grad.empty()) {
    grad = g;
    return;
  }
  float* dst = grad.ptr();
  const float* src = g.ptr();
  for (std::size_t i = 0, n = g.numel(); i < n; ++i) dst[i] += src[i];
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var Graph::leaf(Tensor value, bool requires_grad, std::string name) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.name = std::move(name);
  n.graph = this;
  leaves_.push_back(&n);
  return Var(&n);
}

Var Graph::record(const char* op, Tensor value, std::vector<Var> inputs,
                  std::function<void(Node&)> backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op + " " + shape_str(value.shape()));
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.graph = this;
  for (const auto& in : inputs) {
    if (in.node()->graph != this) throw ContractError("operands belong to different graphs");
    n.requires_grad = n.requires_grad || in.requires_grad();
  }
  if (n.requires_grad) {
    n.inputs.reserve(inputs.size());
    for (const auto& in : inputs) n.inputs.push_back(in.node());
    n.backward = std::move(backward);
  }
  return Var(&n);
}

const Tensor& Gradients::of(const Var& leaf) const {
  auto it = by_node_.find(leaf.node());
  if (it == by_node_.end()) throw ContractError("no gradient recorded for leaf '" + leaf.node()->name + "'");
  return it->second;
}

const Tensor& Gradients::of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ContractError("no gradient recorded for '" + name + "'");
  return it->second;
}

Gradients backward(const Var& loss) {
  if (!loss) throw ContractError("backward on empty Var");
  if (loss.value().numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Graph& g = loss.graph();
  Node* root = loss.node();

  // Post-order DFS from the root: every node appears after all of its inputs,
  // and nodes that cannot reach the root are skipped.
  std::vector<Node*> order;
  {
    std::unordered_map<const Node*, int> state;
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next == 0) {
        if (state[node] != 0) {
          stack.pop_back();
          continue;
        }
        state[node] = 1;
      }
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++];
        if (state[child] == 0) stack.emplace_back(child, 0);
        continue;
      }
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* leaf : g.leaves()) leaf->grad = Tensor();
  for (Node* n : order) n->grad = Tensor();
  root->grad = Tensor(root->value.shape(), 1.0f);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }

  Gradients out;
  for (Node* leaf : g.leaves()) {
    if (!leaf->requires_grad) continue;
    Tensor grad = leaf->grad.empty() ? Tensor(leaf->value.shape()) : leaf->grad;
    if (!leaf->name.empty()) out.by_name_[leaf->name] = grad;
    out.by_node_[leaf] = std::move(grad);
  }
  return out;
}

}  // namespace mozoo
