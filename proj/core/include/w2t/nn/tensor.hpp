// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode autodiff over 2-D double tensors. Graphs are built
// dynamically by the ops in ops.hpp and released when the last Tensor handle
// referencing them goes away.

#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "w2t/types.hpp"

namespace w2t::nn {

using Mat = MatrixD;

struct Node {
  Mat value;
  Mat grad;  // empty until backward reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // pushes this->grad into parents
};

/// Handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Mat value, bool requires_grad = false);

  static Tensor constant(Mat value) { return Tensor(std::move(value), false); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  Eigen::Index size() const { return node_->value.size(); }

  const Mat& value() const { return node_->value; }
  /// Mutable access for optimizers and initializers; never call while a graph
  /// built from this tensor is awaiting backward.
  Mat& mutable_value() { return node_->value; }
  double item() const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool defined() const { return static_cast<bool>(node_); }
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Gradients of every leaf tensor that requires grad, keyed by node.
class GradientMap {
 public:
  const Mat* find(const Tensor& t) const;
  const Mat& at(const Tensor& t) const;
  bool contains(const Tensor& t) const { return find(t) != nullptr; }
  /// A zero matrix shaped like t when t received no gradient.
  Mat get_or_zero(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

  void set(const Node* node, Mat grad) { grads_[node] = std::move(grad); }

 private:
  std::unordered_map<const Node*, Mat> grads_;
};

/// Reverse sweep from a 1x1 loss. Throws kShapeMismatch for non-scalar loss
/// and kDetachedGraph when the loss does not depend on any tensor requiring
/// grad.
GradientMap backward(const Tensor& loss);

/// While alive on a thread, ops on that thread record no graph: results never
/// require grad. Nestable.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

/// When enabled, every op checks its output and throws kNonFiniteActivation on
/// NaN/Inf. Off by default; process-wide.
void set_debug_checks(bool enabled);
bool debug_checks();

}  // namespace w2t::nn
