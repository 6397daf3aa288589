// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/nn/tensor.hpp"

#include <atomic>
#include <unordered_set>
#include <utility>

#include "w2t/error.hpp"

namespace w2t::nn {
namespace {

std::atomic<bool> g_debug_checks{false};
thread_local int t_no_grad_depth = 0;

}  // namespace

NoGradGuard::NoGradGuard() { ++t_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --t_no_grad_depth; }
bool grad_enabled() { return t_no_grad_depth == 0; }

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks() { return g_debug_checks.load(std::memory_order_relaxed); }

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw Error(Errc::kShapeMismatch, "item() needs a 1x1 tensor");
  return node_->value(0, 0);
}

const Mat* GradientMap::find(const Tensor& t) const {
  auto it = grads_.find(t.node());
  return it == grads_.end() ? nullptr : &it->second;
}

const Mat& GradientMap::at(const Tensor& t) const {
  const Mat* g = find(t);
  if (!g) throw Error(Errc::kInvalidArgument, "no gradient recorded for tensor");
  return *g;
}

Mat GradientMap::get_or_zero(const Tensor& t) const {
  const Mat* g = find(t);
  return g ? *g : Mat::Zero(t.rows(), t.cols());
}

GradientMap backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1)
    throw Error(Errc::kShapeMismatch, "backward needs a scalar (1x1) loss");
  if (!loss.requires_grad())
    throw Error(Errc::kDetachedGraph, "loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.node_ptr().get();
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->grad = Mat::Ones(1, 1);
  GradientMap out;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->grad.size() == 0) continue;
    if (node->backward) {
      node->backward(*node);
      node->grad.resize(0, 0);
    } else {
      out.set(node, std::move(node->grad));
      node->grad.resize(0, 0);
    }
  }
  return out;
}

}  // namespace w2t::nn
