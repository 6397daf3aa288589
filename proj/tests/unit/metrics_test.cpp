// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "brute_metrics.hpp"
#include "w2t/error.hpp"
#include "w2t/metrics.hpp"

namespace w2t::evalx {
namespace {

using testing::brute_auroc;
using testing::brute_pearson;
using testing::brute_ranks;
using testing::brute_retrieval;

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::kIo;
}

VectorD vec(std::initializer_list<double> xs) {
  VectorD v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(Auroc, HandCase) {
  EXPECT_DOUBLE_EQ(auroc(vec({0.9, 0.8, 0.3, 0.1}), vec({1, 0, 1, 0})), 0.75);
}

TEST(Auroc, DegenerateLabels) {
  EXPECT_EQ(code_of([] { auroc(vec({0.1, 0.2}), vec({1, 1})); }), Errc::kDegenerateLabels);
}

TEST(Auroc, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 4), size(2, 12);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng);
    VectorD s(n), y(n);
    for (int i = 0; i < n; ++i) {
      s(i) = level(rng) * 0.25;
      y(i) = (i % 2 == 0) ? 1.0 : 0.0;
    }
    std::shuffle(y.data(), y.data() + n, rng);
    EXPECT_EQ(auroc(s, y), brute_auroc(s, y));
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  VectorD s(50), y(50);
  for (int i = 0; i < 50; ++i) {
    s(i) = n(rng);
    y(i) = i % 3 == 0;
  }
  const VectorD t = s.array().exp() * 3.0 + 1.0;
  EXPECT_DOUBLE_EQ(auroc(s, y), auroc(t, y));
}

TEST(Midranks, Ties) { EXPECT_EQ(midranks(vec({3, 1, 3, 2})), vec({3.5, 1, 3.5, 2})); }

TEST(Classification, Perfect) {
  MatrixD labels(4, 2);
  labels << 1, 0, 0, 1, 1, 1, 0, 0;
  const MatrixD logits = (labels.array() * 2.0 - 1.0) * 5.0;
  const auto m = classification_metrics(logits, labels);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.micro_f1, 1.0);
  EXPECT_EQ(m.mauroc, 1.0);
  EXPECT_EQ(m.auroc_attributes, 2);
}

TEST(Classification, ZeroLogitsPredictNothing) {
  MatrixD labels(3, 2);
  labels << 1, 0, 0, 1, 0, 0;
  const auto m = classification_metrics(MatrixD::Zero(3, 2), labels);
  EXPECT_EQ(m.micro_f1, 0.0);
  EXPECT_EQ(m.macro_f1, 0.0);
}

TEST(Classification, ExcludedAttributeAndHandF1) {
  MatrixD labels(4, 3);
  labels << 1, 0, 1, 1, 0, 0, 0, 0, 1, 0, 0, 0;
  MatrixD logits(4, 3);
  logits << 1, -1, 1, -1, -1, 1, 1, -1, -1, -1, -1, -1;
  const auto m = classification_metrics(logits, labels);
  // attr0: tp 1 fp 1 fn 1 -> 0.5; attr1: nothing to find, nothing predicted -> 0; attr2: tp 1 fp 1 fn 1 -> 0.5
  EXPECT_DOUBLE_EQ(m.f1[0], 0.5);
  EXPECT_DOUBLE_EQ(m.f1[1], 0.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.micro_f1, 2.0 * 2 / (2.0 * 2 + 2 + 2));
  EXPECT_EQ(m.excluded_attributes, 1);
  EXPECT_EQ(m.auroc_attributes, 2);
  EXPECT_TRUE(std::isnan(m.auroc[1]));
}

TEST(Classification, Errors) {
  EXPECT_EQ(code_of([] { classification_metrics(MatrixD::Zero(2, 2), MatrixD::Zero(2, 3)); }),
            Errc::kShapeMismatch);
  EXPECT_EQ(code_of([] { classification_metrics(MatrixD::Zero(2, 2), MatrixD::Ones(2, 2)); }),
            Errc::kDegenerateLabels);
}

TEST(Classification, PermutationInvariant) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  MatrixD logits(30, 4), labels(30, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    logits.data()[i] = n(rng);
    labels.data()[i] = n(rng) > 0.3;
  }
  std::vector<int> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  MatrixD pl(30, 4), py(30, 4);
  for (int i = 0; i < 30; ++i) {
    pl.row(i) = logits.row(perm[i]);
    py.row(i) = labels.row(perm[i]);
  }
  const auto a = classification_metrics(logits, labels);
  const auto b = classification_metrics(pl, py);
  EXPECT_DOUBLE_EQ(a.macro_f1, b.macro_f1);
  EXPECT_DOUBLE_EQ(a.micro_f1, b.micro_f1);
  EXPECT_DOUBLE_EQ(a.mauroc, b.mauroc);
}

TEST(Regression, Identity) {
  const VectorD t = vec({0.1, 0.5, 0.3, 0.9});
  const auto m = regression_metrics(t, t);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_DOUBLE_EQ(m.pearson, 1.0);
  EXPECT_DOUBLE_EQ(m.spearman, 1.0);
}

TEST(Regression, Negated) {
  const VectorD t = vec({0.1, 0.5, 0.3, 0.9});
  const auto m = regression_metrics(-t, t);
  EXPECT_DOUBLE_EQ(m.pearson, -1.0);
  EXPECT_DOUBLE_EQ(m.spearman, -1.0);
}

TEST(Regression, HandCase) {
  const auto m = regression_metrics(vec({1, 2, 3}), vec({1, 4, 9}));
  // Sxy = 8, Sxx = 2, Syy = 98 - 196/3
  const double expected = 8.0 / std::sqrt(2.0 * (98.0 - 196.0 / 3.0));
  EXPECT_NEAR(m.pearson, expected, 1e-12);
  EXPECT_NEAR(m.pearson, 0.9897, 5e-5);
  EXPECT_DOUBLE_EQ(m.spearman, 1.0);
  EXPECT_DOUBLE_EQ(m.mae, (0.0 + 2.0 + 6.0) / 3.0);
  EXPECT_DOUBLE_EQ(m.rmse, std::sqrt((0.0 + 4.0 + 36.0) / 3.0));
}

TEST(Regression, ZeroVariance) {
  EXPECT_EQ(code_of([] { pearson(vec({1, 1, 1}), vec({1, 2, 3})); }), Errc::kZeroVariance);
  EXPECT_EQ(code_of([] { spearman(vec({1, 2, 3}), vec({2, 2, 2})); }), Errc::kZeroVariance);
  EXPECT_EQ(code_of([] { regression_metrics(vec({1, 2}), vec({1, 2, 3})); }), Errc::kShapeMismatch);
}

TEST(Regression, SpearmanMatchesBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> level(0, 5), size(3, 12);
  int checked = 0;
  while (checked < 300) {
    const int n = size(rng);
    VectorD a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a(i) = level(rng);
      b(i) = level(rng);
    }
    const VectorD ra = brute_ranks(a), rb = brute_ranks(b);
    if ((ra.array() == ra(0)).all() || (rb.array() == rb(0)).all()) continue;
    EXPECT_NEAR(spearman(a, b), brute_pearson(ra, rb), 1e-12);
    EXPECT_EQ(midranks(a), ra);
    ++checked;
  }
}

TEST(Retrieval, AllRelevantOnTop) {
  MatrixD q(2, 2), g(4, 2);
  q << 1, 0, 0, 1;
  g << 1, 0.1, 0.9, 0, 0, 1, 0.1, 0.8;
  const auto m = retrieval_metrics(q, g, {"a", "b"}, {"a", "a", "b", "b"}, 2);
  EXPECT_DOUBLE_EQ(m.ndcg_at_k, 1.0);
  EXPECT_DOUBLE_EQ(m.hit_at_1, 1.0);
  EXPECT_DOUBLE_EQ(m.mrr, 1.0);
}

TEST(Retrieval, FirstRelevantAtRankThree) {
  MatrixD sim(1, 5);
  sim << 0.9, 0.8, 0.7, 0.1, 0.0;
  const auto m = retrieval_from_similarity(sim, {"t"}, {"x", "y", "t", "x", "y"}, 10);
  EXPECT_DOUBLE_EQ(m.mrr, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.ndcg_at_k, 1.0 / std::log2(4.0));
  EXPECT_DOUBLE_EQ(m.ndcg_at_k, 0.5);
  EXPECT_EQ(m.hit_at_1, 0.0);
}

TEST(Retrieval, AbsentTaskScoresZeroAndIsFlagged) {
  MatrixD sim(2, 2);
  sim << 0.5, 0.1, 0.3, 0.2;
  const auto m = retrieval_from_similarity(sim, {"a", "zzz"}, {"a", "b"}, 10);
  EXPECT_EQ(m.absent_queries, 1);
  EXPECT_DOUBLE_EQ(m.ndcg_at_k, 0.5);
  ASSERT_EQ(m.per_task.count("zzz"), 1u);
  EXPECT_EQ(m.per_task.at("zzz").absent, 1);
  EXPECT_EQ(m.per_task.at("zzz").ndcg_at_k, 0.0);
  EXPECT_EQ(m.per_task.at("a").queries, 1);
}

TEST(Retrieval, TiesBrokenByGalleryIndex) {
  MatrixD sim(1, 3);
  sim << 0.5, 0.5, 0.5;
  EXPECT_EQ(retrieval_from_similarity(sim, {"t"}, {"x", "t", "t"}, 10).mrr, 0.5);
}

TEST(Retrieval, Errors) {
  EXPECT_EQ(code_of([] { retrieval_metrics(MatrixD::Ones(1, 3), MatrixD::Ones(2, 4), {"a"}, {"a", "b"}); }),
            Errc::kDimMismatch);
  EXPECT_EQ(code_of([] { retrieval_metrics(MatrixD::Ones(1, 3), MatrixD(0, 3), {"a"}, {}); }),
            Errc::kEmptyGallery);
}

TEST(Retrieval, MatchesBruteForceEnumeration) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 12), task(0, 2), level(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    const int nq = size(rng), ng = size(rng);
    const int k = 1 + trial % 6;
    MatrixD sim(nq, ng);
    for (Eigen::Index i = 0; i < sim.size(); ++i) sim.data()[i] = level(rng) * 0.25;
    std::vector<std::string> qt(static_cast<std::size_t>(nq)), gt(static_cast<std::size_t>(ng));
    for (auto& t : qt) t = "t" + std::to_string(task(rng));
    for (auto& t : gt) t = "t" + std::to_string(task(rng));
    const auto m = retrieval_from_similarity(sim, qt, gt, k);
    const auto b = brute_retrieval(sim, qt, gt, k);
    EXPECT_NEAR(m.ndcg_at_k, b.ndcg, 1e-15);
    EXPECT_NEAR(m.hit_at_1, b.hit, 1e-15);
    EXPECT_NEAR(m.mrr, b.mrr, 1e-15);
  }
}

TEST(Retrieval, ScaleInvariant) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n;
  MatrixD q(5, 4), g(9, 4);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = n(rng);
  const std::vector<std::string> qt{"a", "b", "c", "a", "b"};
  const std::vector<std::string> gt{"a", "b", "c", "a", "b", "c", "a", "b", "c"};
  const auto m1 = retrieval_metrics(q, g, qt, gt, 3);
  const auto m2 = retrieval_metrics(q * 7.5, g * 0.01, qt, gt, 3);
  EXPECT_EQ(m1.ndcg_at_k, m2.ndcg_at_k);
  EXPECT_EQ(m1.mrr, m2.mrr);
  EXPECT_EQ(m1.hit_at_1, m2.hit_at_1);
}

TEST(Cosine, ZeroRowsScoreZero) {
  MatrixD q(2, 2), g(2, 2);
  q << 0, 0, 1, 1;
  g << 1, 1, -1, -1;
  const MatrixD s = cosine_similarity(q, g);
  EXPECT_EQ(s(0, 0), 0.0);
  EXPECT_NEAR(s(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(s(1, 1), -1.0, 1e-15);
}

}  // namespace
}  // namespace w2t::evalx
