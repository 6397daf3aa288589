// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "w2t/nn/tensor.hpp"

namespace w2t::nn {

// Rows are samples/tokens throughout. A "segment" layout is an offsets vector
// of size G+1 splitting the rows into G contiguous groups.
using Offsets = std::vector<Eigen::Index>;

Offsets uniform_offsets(Eigen::Index groups, Eigen::Index group_size);

Tensor matmul(const Tensor& a, const Tensor& b);
/// Same shape, or b a 1 x cols row broadcast over a's rows.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// x W + b with b a 1 x out row.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);

Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor gelu(const Tensor& a);  // exact erf form
Tensor tanh(const Tensor& a);
Tensor log1p(const Tensor& a);
Tensor sigmoid(const Tensor& a);

Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1

/// Gathers table rows; gradient scatters back into the table.
Tensor embedding(const Tensor& table, const std::vector<Eigen::Index>& indices);

/// scores: n x 1. Softmax within each segment.
Tensor segment_softmax(const Tensor& scores, const Offsets& offsets);
/// x: n x d, weights: n x 1 -> G x d with row g = sum over segment of w_i x_i.
Tensor segment_weighted_sum(const Tensor& x, const Tensor& weights, const Offsets& offsets);

/// Multi-head scaled dot-product self-attention inside each segment.
/// q, k, v: n x d with d divisible by heads. Returns n x d (heads concatenated).
Tensor segment_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                         const Offsets& offsets, int heads);

/// Mean binary cross-entropy with logits against constant 0/1 targets.
Tensor bce_with_logits(const Tensor& logits, const Mat& targets);
/// Mean squared error against constant targets.
Tensor mse(const Tensor& pred, const Mat& targets);

}  // namespace w2t::nn
