// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/nn/ops.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "w2t/error.hpp"

namespace w2t::nn {
namespace {

using NodePtr = std::shared_ptr<Node>;

Tensor make(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> bw,
            const char* op) {
  if (debug_checks() && !value.allFinite())
    throw Error(Errc::kNonFiniteActivation, std::string("non-finite output from ") + op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled())
    for (const auto& p : parents) needs = needs || p->requires_grad;
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(bw);
  }
  return Tensor::from_node(std::move(node));
}

template <typename Derived>
void accumulate(Node& parent, const Eigen::MatrixBase<Derived>& g) {
  if (!parent.requires_grad) return;
  if (parent.grad.size() == 0) parent.grad = g;
  else parent.grad += g;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::kShapeMismatch, what);
}

std::string dims(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void check_offsets(const Offsets& offsets, Eigen::Index rows) {
  require(!offsets.empty() && offsets.front() == 0 && offsets.back() == rows,
          "segment offsets must start at 0 and end at the row count");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    require(offsets[i] > offsets[i - 1], "segments must be non-empty");
}

}  // namespace

Offsets uniform_offsets(Eigen::Index groups, Eigen::Index group_size) {
  Offsets out(static_cast<std::size_t>(groups) + 1);
  for (Eigen::Index g = 0; g <= groups; ++g) out[static_cast<std::size_t>(g)] = g * group_size;
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul " + dims(a) + " by " + dims(b));
  Mat out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return make(std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad * pb.value.transpose());
    if (pb.requires_grad) accumulate(pb, pa.value.transpose() * self.grad);
  }, "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    return make(a.value() + b.value(), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
      accumulate(*self.parents[0], self.grad);
      accumulate(*self.parents[1], self.grad);
    }, "add");
  }
  require(b.rows() == 1 && b.cols() == a.cols(), "add " + dims(a) + " and " + dims(b));
  Mat out = a.value();
  out.rowwise() += b.value().row(0);
  return make(std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], self.grad.colwise().sum());
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub " + dims(a) + " and " + dims(b));
  return make(a.value() - b.value(), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
    accumulate(*self.parents[1], -self.grad);
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "mul " + dims(a) + " and " + dims(b));
  return make(a.value().cwiseProduct(b.value()), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) accumulate(pb, self.grad.cwiseProduct(pa.value));
  }, "mul");
}

Tensor scale(const Tensor& a, double factor) {
  return make(a.value() * factor, {a.node_ptr()}, [factor](Node& self) {
    accumulate(*self.parents[0], self.grad * factor);
  }, "scale");
}

Tensor add_scalar(const Tensor& a, double value) {
  return make(a.value().array() + value, {a.node_ptr()}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
  }, "add_scalar");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.cols() == w.rows(), "linear input " + dims(x) + " by weight " + dims(w));
  require(b.rows() == 1 && b.cols() == w.cols(), "linear bias " + dims(b));
  Mat out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return make(std::move(out), {x.node_ptr(), w.node_ptr(), b.node_ptr()}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) accumulate(px, self.grad * pw.value.transpose());
    if (pw.requires_grad) accumulate(pw, px.value.transpose() * self.grad);
    if (pb.requires_grad) accumulate(pb, self.grad.colwise().sum());
  }, "linear");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat of zero tensors");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<NodePtr> parents;
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat row mismatch");
    cols += p.cols();
    parents.push_back(p.node_ptr());
    widths.push_back(p.cols());
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make(std::move(out), std::move(parents), [widths](Node& self) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      accumulate(*self.parents[i], self.grad.middleCols(off, widths[i]));
      off += widths[i];
    }
  }, "concat_cols");
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice out of range");
  return make(a.value().middleCols(start, count), {a.node_ptr()}, [start, count](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    if (pa.grad.size() == 0) pa.grad = Mat::Zero(pa.value.rows(), pa.value.cols());
    pa.grad.middleCols(start, count) += self.grad;
  }, "slice_cols");
}

Tensor softmax_rows(const Tensor& a) {
  Mat out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
  return make(std::move(out), {a.node_ptr()}, [](Node& self) {
    const Mat& y = self.value;
    Mat g = y.cwiseProduct(self.grad);
    const Eigen::VectorXd dots = g.rowwise().sum();
    g -= y.cwiseProduct(dots.replicate(1, y.cols()));
    accumulate(*self.parents[0], g);
  }, "softmax_rows");
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Eigen::Index n = x.cols();
  require(gamma.rows() == 1 && gamma.cols() == n && beta.rows() == 1 && beta.cols() == n,
          "layer_norm affine parameters must be 1x" + std::to_string(n));
  Mat xhat(x.rows(), n);
  Eigen::VectorXd inv(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto row = x.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (row.array() - mu) * inv(i);
  }
  Mat out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  return make(std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
              [xhat = std::move(xhat), inv = std::move(inv)](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (px.requires_grad) {
      Mat dxhat = self.grad.array().rowwise() * pg.value.row(0).array();
      const double n_inv = 1.0 / static_cast<double>(dxhat.cols());
      const Eigen::VectorXd m1 = dxhat.rowwise().sum() * n_inv;
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().sum() * n_inv;
      Mat dx = dxhat;
      dx.colwise() -= m1;
      dx -= xhat.cwiseProduct(m2.replicate(1, xhat.cols()));
      dx = dx.array().colwise() * inv.array();
      accumulate(px, dx);
    }
    if (pg.requires_grad) accumulate(pg, self.grad.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) accumulate(pb, self.grad.colwise().sum());
  }, "layer_norm_rows");
}

Tensor gelu(const Tensor& a) {
  const double k = 1.0 / std::numbers::sqrt2;
  Mat out = a.value().unaryExpr([k](double x) { return 0.5 * x * (1.0 + std::erf(x * k)); });
  return make(std::move(out), {a.node_ptr()}, [k](Node& self) {
    Node& pa = *self.parents[0];
    const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Mat d = pa.value.unaryExpr([k, c](double x) {
      return 0.5 * (1.0 + std::erf(x * k)) + x * c * std::exp(-0.5 * x * x);
    });
    accumulate(pa, d.cwiseProduct(self.grad));
  }, "gelu");
}

Tensor tanh(const Tensor& a) {
  Mat out = a.value().array().tanh();
  return make(std::move(out), {a.node_ptr()}, [](Node& self) {
    accumulate(*self.parents[0], (1.0 - self.value.array().square()).matrix().cwiseProduct(self.grad));
  }, "tanh");
}

Tensor log1p(const Tensor& a) {
  Mat out = a.value().unaryExpr([](double x) { return std::log1p(x); });
  return make(std::move(out), {a.node_ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    accumulate(pa, (self.grad.array() / (1.0 + pa.value.array())).matrix());
  }, "log1p");
}

Tensor sigmoid(const Tensor& a) {
  Mat out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return make(std::move(out), {a.node_ptr()}, [](Node& self) {
    const Mat& y = self.value;
    accumulate(*self.parents[0], (y.array() * (1.0 - y.array()) * self.grad.array()).matrix());
  }, "sigmoid");
}

Tensor sum(const Tensor& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return make(std::move(out), {a.node_ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    accumulate(pa, Mat::Constant(pa.value.rows(), pa.value.cols(), self.grad(0, 0)));
  }, "sum");
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  require(n > 0, "mean of an empty tensor");
  Mat out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return make(std::move(out), {a.node_ptr()}, [n](Node& self) {
    Node& pa = *self.parents[0];
    accumulate(pa, Mat::Constant(pa.value.rows(), pa.value.cols(), self.grad(0, 0) / n));
  }, "mean");
}

Tensor embedding(const Tensor& table, const std::vector<Eigen::Index>& indices) {
  Mat out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx < 0 || idx >= table.rows())
      throw Error(Errc::kShapeMismatch, "embedding index " + std::to_string(idx) +
                                            " outside table of " + std::to_string(table.rows()));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(idx);
  }
  return make(std::move(out), {table.node_ptr()}, [indices](Node& self) {
    Node& pt = *self.parents[0];
    if (pt.grad.size() == 0) pt.grad = Mat::Zero(pt.value.rows(), pt.value.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
      pt.grad.row(indices[i]) += self.grad.row(static_cast<Eigen::Index>(i));
  }, "embedding");
}

Tensor segment_softmax(const Tensor& scores, const Offsets& offsets) {
  require(scores.cols() == 1, "segment_softmax expects an n x 1 column");
  check_offsets(offsets, scores.rows());
  Mat out = scores.value();
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    auto seg = out.middleRows(offsets[g], offsets[g + 1] - offsets[g]);
    seg.array() -= seg.maxCoeff();
    seg = seg.array().exp();
    seg /= seg.sum();
  }
  return make(std::move(out), {scores.node_ptr()}, [offsets](Node& self) {
    Mat d(self.value.rows(), 1);
    for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
      const auto len = offsets[g + 1] - offsets[g];
      const auto y = self.value.middleRows(offsets[g], len);
      const auto dy = self.grad.middleRows(offsets[g], len);
      const double dot = y.cwiseProduct(dy).sum();
      d.middleRows(offsets[g], len) = y.cwiseProduct(dy) - dot * y;
    }
    accumulate(*self.parents[0], d);
  }, "segment_softmax");
}

Tensor segment_weighted_sum(const Tensor& x, const Tensor& weights, const Offsets& offsets) {
  require(weights.cols() == 1 && weights.rows() == x.rows(),
          "segment weights must be an n x 1 column matching x");
  check_offsets(offsets, x.rows());
  const auto groups = static_cast<Eigen::Index>(offsets.size()) - 1;
  Mat out(groups, x.cols());
  for (Eigen::Index g = 0; g < groups; ++g) {
    const auto s = offsets[static_cast<std::size_t>(g)];
    const auto len = offsets[static_cast<std::size_t>(g) + 1] - s;
    out.row(g).noalias() = weights.value().middleRows(s, len).transpose() * x.value().middleRows(s, len);
  }
  return make(std::move(out), {x.node_ptr(), weights.node_ptr()}, [offsets](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    const auto groups = static_cast<Eigen::Index>(offsets.size()) - 1;
    Mat dx, dw;
    if (px.requires_grad) dx.resize(px.value.rows(), px.value.cols());
    if (pw.requires_grad) dw.resize(pw.value.rows(), 1);
    for (Eigen::Index g = 0; g < groups; ++g) {
      const auto s = offsets[static_cast<std::size_t>(g)];
      const auto len = offsets[static_cast<std::size_t>(g) + 1] - s;
      if (px.requires_grad)
        dx.middleRows(s, len).noalias() = pw.value.middleRows(s, len) * self.grad.row(g);
      if (pw.requires_grad)
        dw.middleRows(s, len).noalias() = px.value.middleRows(s, len) * self.grad.row(g).transpose();
    }
    if (px.requires_grad) accumulate(px, dx);
    if (pw.requires_grad) accumulate(pw, dw);
  }, "segment_weighted_sum");
}

Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const Offsets& offsets, int heads) {
  require(q.rows() == k.rows() && q.rows() == v.rows() && q.cols() == k.cols() &&
              q.cols() == v.cols(),
          "attention q/k/v shapes differ");
  require(heads > 0 && q.cols() % heads == 0, "model width not divisible by heads");
  check_offsets(offsets, q.rows());
  const Eigen::Index dh = q.cols() / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto groups = offsets.size() - 1;

  std::vector<Mat> probs(groups * static_cast<std::size_t>(heads));
  Mat out(q.rows(), q.cols());
  for (std::size_t g = 0; g < groups; ++g) {
    const auto s = offsets[g];
    const auto len = offsets[g + 1] - s;
    for (int h = 0; h < heads; ++h) {
      const auto qb = q.value().block(s, h * dh, len, dh);
      const auto kb = k.value().block(s, h * dh, len, dh);
      const auto vb = v.value().block(s, h * dh, len, dh);
      Mat p = (qb * kb.transpose()) * scale_factor;
      for (Eigen::Index i = 0; i < len; ++i) {
        auto row = p.row(i);
        row.array() -= row.maxCoeff();
        row = row.array().exp();
        row /= row.sum();
      }
      out.block(s, h * dh, len, dh).noalias() = p * vb;
      probs[g * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)] = std::move(p);
    }
  }
  return make(std::move(out), {q.node_ptr(), k.node_ptr(), v.node_ptr()},
              [offsets, heads, dh, scale_factor, probs = std::move(probs)](Node& self) {
    Node& pq = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pv = *self.parents[2];
    Mat dq = Mat::Zero(pq.value.rows(), pq.value.cols());
    Mat dk = Mat::Zero(pk.value.rows(), pk.value.cols());
    Mat dv = Mat::Zero(pv.value.rows(), pv.value.cols());
    const auto groups = offsets.size() - 1;
    for (std::size_t g = 0; g < groups; ++g) {
      const auto s = offsets[g];
      const auto len = offsets[g + 1] - s;
      for (int h = 0; h < heads; ++h) {
        const Mat& p = probs[g * static_cast<std::size_t>(heads) + static_cast<std::size_t>(h)];
        const auto dout = self.grad.block(s, h * dh, len, dh);
        const auto qb = pq.value.block(s, h * dh, len, dh);
        const auto kb = pk.value.block(s, h * dh, len, dh);
        const auto vb = pv.value.block(s, h * dh, len, dh);
        dv.block(s, h * dh, len, dh).noalias() = p.transpose() * dout;
        Mat dp = dout * vb.transpose();
        const Eigen::VectorXd dots = p.cwiseProduct(dp).rowwise().sum();
        Mat ds = p.cwiseProduct(dp - dots.replicate(1, len)) * scale_factor;
        dq.block(s, h * dh, len, dh).noalias() = ds * kb;
        dk.block(s, h * dh, len, dh).noalias() = ds.transpose() * qb;
      }
    }
    accumulate(pq, dq);
    accumulate(pk, dk);
    accumulate(pv, dv);
  }, "segment_attention");
}

Tensor bce_with_logits(const Tensor& logits, const Mat& targets) {
  require(logits.rows() == targets.rows() && logits.cols() == targets.cols(),
          "bce targets " + std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) +
              " vs logits " + dims(logits));
  const double n = static_cast<double>(logits.size());
  const auto& x = logits.value();
  const double loss =
      (x.array().max(0.0) - x.array() * targets.array() + (-x.array().abs()).exp().log1p()).sum() / n;
  Mat out(1, 1);
  out(0, 0) = loss;
  return make(std::move(out), {logits.node_ptr()}, [targets, n](Node& self) {
    Node& px = *self.parents[0];
    Mat sig = px.value.unaryExpr([](double v) {
      return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
    accumulate(px, (sig - targets) * (self.grad(0, 0) / n));
  }, "bce_with_logits");
}

Tensor mse(const Tensor& pred, const Mat& targets) {
  require(pred.rows() == targets.rows() && pred.cols() == targets.cols(), "mse shape mismatch");
  const double n = static_cast<double>(pred.size());
  Mat out(1, 1);
  out(0, 0) = (pred.value() - targets).squaredNorm() / n;
  return make(std::move(out), {pred.node_ptr()}, [targets, n](Node& self) {
    Node& pp = *self.parents[0];
    accumulate(pp, (pp.value - targets) * (2.0 * self.grad(0, 0) / n));
  }, "mse");
}

}  // namespace w2t::nn
