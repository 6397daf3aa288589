// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "w2t/error.hpp"

namespace w2t::evalx {

VectorD midranks(const VectorD& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a) < x(b); });
  VectorD ranks(n);
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j + 1 < n && x(idx[j + 1]) == x(idx[i])) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) ranks(idx[t]) = r;
    i = j + 1;
  }
  return ranks;
}

double auroc(const VectorD& scores, const VectorD& labels) {
  if (scores.size() != labels.size()) throw Error(Errc::kShapeMismatch, "auroc: size mismatch");
  double n_pos = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) n_pos += labels(i) > 0.5 ? 1.0 : 0.0;
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0)
    throw Error(Errc::kDegenerateLabels, "auroc needs both classes");
  const VectorD r = midranks(scores);
  double rank_sum = 0.0;
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) > 0.5) rank_sum += r(i);
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

ClassificationMetrics classification_metrics(const MatrixD& logits, const MatrixD& labels) {
  if (logits.rows() != labels.rows() || logits.cols() != labels.cols() || logits.rows() < 1)
    throw Error(Errc::kShapeMismatch, "classification_metrics: shapes differ or empty");
  ClassificationMetrics m;
  const Eigen::Index k = logits.cols();
  double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0, auc_sum = 0.0;
  for (Eigen::Index a = 0; a < k; ++a) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const bool pred = logits(i, a) > 0.0;
      const bool truth = labels(i, a) > 0.5;
      tp += (pred && truth) ? 1.0 : 0.0;
      fp += (pred && !truth) ? 1.0 : 0.0;
      fn += (!pred && truth) ? 1.0 : 0.0;
    }
    const double denom = 2.0 * tp + fp + fn;
    m.f1.push_back(denom > 0.0 ? 2.0 * tp / denom : 0.0);
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    try {
      const double v = auroc(logits.col(a), labels.col(a));
      m.auroc.push_back(v);
      auc_sum += v;
      ++m.auroc_attributes;
    } catch (const Error& e) {
      if (e.code() != Errc::kDegenerateLabels) throw;
      m.auroc.push_back(std::numeric_limits<double>::quiet_NaN());
      ++m.excluded_attributes;
    }
  }
  if (m.auroc_attributes == 0)
    throw Error(Errc::kDegenerateLabels, "no attribute has both classes");
  m.macro_f1 = std::accumulate(m.f1.begin(), m.f1.end(), 0.0) / static_cast<double>(k);
  const double micro_denom = 2.0 * tp_all + fp_all + fn_all;
  m.micro_f1 = micro_denom > 0.0 ? 2.0 * tp_all / micro_denom : 0.0;
  m.mauroc = auc_sum / m.auroc_attributes;
  return m;
}

double pearson(const VectorD& x, const VectorD& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(Errc::kShapeMismatch, "pearson needs two equal-length vectors of size >= 2");
  const VectorD cx = x.array() - x.mean();
  const VectorD cy = y.array() - y.mean();
  const double sx = cx.norm();
  const double sy = cy.norm();
  if (sx == 0.0 || sy == 0.0) throw Error(Errc::kZeroVariance, "correlation of a constant vector");
  return std::clamp(cx.dot(cy) / (sx * sy), -1.0, 1.0);
}

double spearman(const VectorD& x, const VectorD& y) { return pearson(midranks(x), midranks(y)); }

RegressionMetrics regression_metrics(const VectorD& preds, const VectorD& targets) {
  if (preds.size() != targets.size() || preds.size() < 1)
    throw Error(Errc::kShapeMismatch, "regression_metrics: size mismatch");
  RegressionMetrics m;
  const VectorD diff = preds - targets;
  m.mae = diff.cwiseAbs().mean();
  m.rmse = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  m.pearson = pearson(preds, targets);
  m.spearman = spearman(preds, targets);
  return m;
}

MatrixD cosine_similarity(const MatrixD& queries, const MatrixD& gallery) {
  if (queries.cols() != gallery.cols())
    throw Error(Errc::kDimMismatch, "query and gallery embeddings differ in dimension");
  auto normalize = [](const MatrixD& m) {
    MatrixD out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n > 0.0) out.row(i) /= n;
    }
    return out;
  };
  return normalize(queries) * normalize(gallery).transpose();
}

RetrievalMetrics retrieval_from_similarity(const MatrixD& similarity,
                                           const std::vector<std::string>& query_tasks,
                                           const std::vector<std::string>& gallery_tasks, int k) {
  if (gallery_tasks.empty() || similarity.cols() == 0)
    throw Error(Errc::kEmptyGallery, "retrieval needs a non-empty gallery");
  if (static_cast<std::size_t>(similarity.rows()) != query_tasks.size() ||
      static_cast<std::size_t>(similarity.cols()) != gallery_tasks.size())
    throw Error(Errc::kShapeMismatch, "similarity shape does not match task lists");
  if (k < 1) throw Error(Errc::kInvalidArgument, "k must be positive");
  RetrievalMetrics m;
  m.k = k;
  const auto n_gal = static_cast<Eigen::Index>(gallery_tasks.size());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_gal));
  for (Eigen::Index q = 0; q < similarity.rows(); ++q) {
    const std::string& task = query_tasks[static_cast<std::size_t>(q)];
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return similarity(q, a) > similarity(q, b);
    });
    int relevant = 0;
    for (const auto& t : gallery_tasks) relevant += t == task ? 1 : 0;
    double ndcg = 0.0, hit = 0.0, rr = 0.0;
    if (relevant > 0) {
      double dcg = 0.0;
      for (int i = 0; i < std::min<Eigen::Index>(k, n_gal); ++i)
        if (gallery_tasks[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] == task)
          dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      double ideal = 0.0;
      for (int i = 0; i < std::min(k, relevant); ++i) ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
      ndcg = dcg / ideal;
      hit = gallery_tasks[static_cast<std::size_t>(order[0])] == task ? 1.0 : 0.0;
      for (Eigen::Index i = 0; i < n_gal; ++i) {
        if (gallery_tasks[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] == task) {
          rr = 1.0 / static_cast<double>(i + 1);
          break;
        }
      }
    }
    auto& b = m.per_task[task];
    ++b.queries;
    if (relevant == 0) {
      ++b.absent;
      ++m.absent_queries;
    }
    b.ndcg_at_k += ndcg;
    b.hit_at_1 += hit;
    b.mrr += rr;
    m.ndcg_at_k += ndcg;
    m.hit_at_1 += hit;
    m.mrr += rr;
  }
  const double nq = static_cast<double>(query_tasks.size());
  if (nq > 0) {
    m.ndcg_at_k /= nq;
    m.hit_at_1 /= nq;
    m.mrr /= nq;
  }
  for (auto& [task, b] : m.per_task) {
    b.ndcg_at_k /= b.queries;
    b.hit_at_1 /= b.queries;
    b.mrr /= b.queries;
  }
  return m;
}

RetrievalMetrics retrieval_metrics(const MatrixD& query_embs, const MatrixD& gallery_embs,
                                   const std::vector<std::string>& query_tasks,
                                   const std::vector<std::string>& gallery_tasks, int k) {
  if (gallery_embs.rows() == 0 || gallery_tasks.empty())
    throw Error(Errc::kEmptyGallery, "retrieval needs a non-empty gallery");
  return retrieval_from_similarity(cosine_similarity(query_embs, gallery_embs), query_tasks,
                                   gallery_tasks, k);
}

}  // namespace w2t::evalx
