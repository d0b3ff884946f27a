#pragma once

// Dense row-major tensors with a dynamically recorded reverse-mode graph.
//
// A Tensor is a shared handle to a node. Ops that receive at least one input
// with requires_grad produce a node that remembers its parents and a closure
// computing the vector-Jacobian product. backward() on a scalar result sorts
// the reachable nodes topologically, runs every closure exactly once in
// reverse order and then releases the graph.

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mmui/errors.hpp"

namespace mmui {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Tensor storage, aligned to Eigen's widest packet. With a fixed alignment the
/// vectorised products peel the same way on every run, so results are bit-reproducible.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct TensorNode {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // sized like data iff requires_grad
  bool requires_grad = false;
  bool released = false;  // set on a root once its graph has been consumed

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
};

template <class T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() : node_(std::make_shared<Node>()) {}

  explicit Tensor(Shape shape, T fill = T{0}, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    set_requires_grad(requires_grad);
  }

  Tensor(Shape shape, std::span<const T> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (shape_numel(shape) != data.size()) {
      throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data.assign(data.begin(), data.end());
    set_requires_grad(requires_grad);
  }

  Tensor(Shape shape, const std::vector<T>& data, bool requires_grad = false)
      : Tensor(std::move(shape), std::span<const T>(data), requires_grad) {}
  Tensor(Shape shape, std::initializer_list<T> data, bool requires_grad = false)
      : Tensor(std::move(shape), std::span<const T>(data.begin(), data.size()), requires_grad) {}

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor({1}, v, requires_grad); }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  T& operator[](std::size_t i) { return node_->data[i]; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on) {
      node_->grad.assign(node_->data.size(), T{0});
    } else {
      node_->grad.clear();
    }
    return *this;
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T{0}); }
  bool is_leaf() const { return node_->is_leaf(); }

  /// Deep copy detached from any graph.
  Tensor clone() const {
    Tensor out(node_->shape, std::span<const T>(node_->data), false);
    return out;
  }

  /// Same values, no graph history, shares nothing.
  Tensor detach() const { return clone(); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  template <class U>
  friend Tensor<U> make_result(Shape, std::vector<Tensor<U>>);

  std::shared_ptr<Node> node_;
};

namespace detail {
inline thread_local bool grad_recording = true;
}

/// Disables graph recording on the current thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_recording) { detail::grad_recording = false; }
  ~NoGradGuard() { detail::grad_recording = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Allocates the output of an op. Records parents when any input needs gradients.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<Tensor<T>> inputs) {
  auto node = std::make_shared<TensorNode<T>>();
  node->data.assign(shape_numel(shape), T{0});
  node->shape = std::move(shape);
  if (!detail::grad_recording) return Tensor<T>(std::move(node));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->data.size(), T{0});
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
  }
  return Tensor<T>(std::move(node));
}

/// The reachable part of a recorded graph in topological order (inputs first).
template <class T>
class BackwardGraph {
 public:
  explicit BackwardGraph(const std::shared_ptr<TensorNode<T>>& root) {
    // Iterative post-order DFS; recursion depth would track network depth.
    std::unordered_set<const TensorNode<T>*> seen;
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        TensorNode<T>* p = n->parents[next++].get();
        if (p->requires_grad && !p->is_leaf() && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order_.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }
  const std::vector<TensorNode<T>*>& nodes() const { return order_; }

  void run() {
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) (*it)->backward_fn(**it);
  }

  void release() {
    for (auto* n : order_) {
      n->backward_fn = nullptr;
      n->parents.clear();
    }
  }

 private:
  std::vector<TensorNode<T>*> order_;
};

/// Reverse-mode sweep from a scalar. Gradients accumulate into leaves.
template <class T>
void backward(Tensor<T>& loss) {
  auto& root = loss.node();
  if (root->released) throw UsageError("backward() called twice on the same graph; re-run forward first");
  if (loss.numel() != 1) throw ShapeError("backward() requires a scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad() || loss.is_leaf()) {
    throw UsageError("backward() on a tensor that has no recorded graph");
  }
  BackwardGraph<T> graph(root);
  root->grad[0] += T{1};
  graph.run();
  graph.release();
  root->released = true;
}

}  // namespace mmui
