#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mozoo/tensor.hpp"

namespace mozoo {

class Graph;

/// One recorded value in a Graph together with the rule that pushes its
/// gradient into its inputs.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string name;
  std::vector<Node*> inputs;
  std::function<void(Node&)> backward;
  Graph* graph = nullptr;

  /// grad += g, allocating on first use.
  void accumulate(const Tensor& g);
  /// Mutable gradient buffer of matching shape, zero-filled on first use.
  Tensor& grad_buffer();
};

/// Lightweight handle to a Node owned by a Graph.
class Var {
 public:
  Var() = default;
  explicit Var(Node* node) : node_(node) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  Graph& graph() const { return *node_->graph; }
  Node* node() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  Node* node_ = nullptr;
};

/// Tape of operations in creation order. Creation order is a topological
/// order, so a single reverse sweep visits every node exactly once.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = false, std::string name = {});

  /// Records the output of operation `op`. The backward rule is kept only
  /// when at least one input requires a gradient. Throws NumericError if the
  /// value is not finite.
  Var record(const char* op, Tensor value, std::vector<Var> inputs,
             std::function<void(Node&)> backward);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node*>& leaves() const { return leaves_; }

 private:
  std::deque<Node> nodes_;
  std::vector<Node*> leaves_;
};

/// Gradients of a scalar loss with respect to every requires_grad leaf.
class Gradients {
 public:
  const Tensor& of(const Var& leaf) const;
  const Tensor& of(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }
  const std::map<std::string, Tensor>& named() const { return by_name_; }

 private:
  friend Gradients backward(const Var& loss);
  std::unordered_map<const Node*, Tensor> by_node_;
  std::map<std::string, Tensor> by_name_;
};

/// Reverse sweep from a single-element loss. Leaves that do not participate
/// receive zeros.
Gradients backward(const Var& loss);

}  // namespace mozoo
