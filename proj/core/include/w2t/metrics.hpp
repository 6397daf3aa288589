// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "w2t/types.hpp"

namespace w2t::evalx {

struct ClassificationMetrics {
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double mauroc = 0.0;
  int auroc_attributes = 0;   // attributes with both classes present
  int excluded_attributes = 0;
  std::vector<double> f1;     // per attribute
  std::vector<double> auroc;  // per attribute, NaN when excluded
};

/// Average ranks (1-based) with ties sharing their midrank.
VectorD midranks(const VectorD& x);

/// Mann-Whitney AUROC with midranks. labels are 0/1. Throws kDegenerateLabels
/// when only one class is present.
double auroc(const VectorD& scores, const VectorD& labels);

/// logits and labels are N x K. An attribute is predicted when
/// sigmoid(logit) > 0.5. Throws kShapeMismatch, kDegenerateLabels.
ClassificationMetrics classification_metrics(const MatrixD& logits, const MatrixD& labels);

struct RegressionMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double pearson = 0.0;
  double spearman = 0.0;
};

/// Throws kZeroVariance.
double pearson(const VectorD& x, const VectorD& y);
double spearman(const VectorD& x, const VectorD& y);
/// Throws kShapeMismatch; kZeroVariance for constant inputs.
RegressionMetrics regression_metrics(const VectorD& preds, const VectorD& targets);

struct TaskBreakdown {
  int queries = 0;
  int absent = 0;  // queries whose task has no gallery item
  double ndcg_at_k = 0.0;
  double hit_at_1 = 0.0;
  double mrr = 0.0;
};

struct RetrievalMetrics {
  int k = 10;
  double ndcg_at_k = 0.0;
  double hit_at_1 = 0.0;
  double mrr = 0.0;
  int absent_queries = 0;
  std::map<std::string, TaskBreakdown> per_task;
};

/// Cosine similarity matrix, queries x gallery. Zero rows score 0.
MatrixD cosine_similarity(const MatrixD& queries, const MatrixD& gallery);

/// Ranks each query's gallery by descending similarity (ties by gallery
/// index). Throws kEmptyGallery, kShapeMismatch.
RetrievalMetrics retrieval_from_similarity(const MatrixD& similarity,
                                           const std::vector<std::string>& query_tasks,
                                           const std::vector<std::string>& gallery_tasks,
                                           int k = 10);

/// Throws kDimMismatch, kEmptyGallery.
RetrievalMetrics retrieval_metrics(const MatrixD& query_embs, const MatrixD& gallery_embs,
                                   const std::vector<std::string>& query_tasks,
                                   const std::vector<std::string>& gallery_tasks, int k = 10);

}  // namespace w2t::evalx
