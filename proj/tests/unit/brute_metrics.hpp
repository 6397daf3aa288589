// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "w2t/types.hpp"

namespace w2t::testing {

// Brute-force references: pairwise enumeration, no sorting.

inline double brute_auroc(const VectorD& s, const VectorD& y) {
  double good = 0.0, pairs = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    for (Eigen::Index j = 0; j < s.size(); ++j)
      if (y(i) == 1.0 && y(j) == 0.0) {
        pairs += 1.0;
        good += s(i) > s(j) ? 1.0 : s(i) == s(j) ? 0.5 : 0.0;
      }
  return good / pairs;
}

inline VectorD brute_ranks(const VectorD& x) {
  VectorD r(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (x(j) < x(i)) less += 1.0;
      if (x(j) == x(i)) equal += 1.0;
    }
    r(i) = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double brute_pearson(const VectorD& a, const VectorD& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    sa += a(i);
    sb += b(i);
    saa += a(i) * a(i);
    sbb += b(i) * b(i);
    sab += a(i) * b(i);
  }
  return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

struct BruteRetrieval {
  double ndcg = 0.0, hit = 0.0, mrr = 0.0;
};

// Position of gallery item j in query q's ranking = number of items that beat it.
inline BruteRetrieval brute_retrieval(const MatrixD& sim, const std::vector<std::string>& qt,
                                      const std::vector<std::string>& gt, int k) {
  BruteRetrieval out;
  const auto nq = sim.rows(), ng = sim.cols();
  for (Eigen::Index q = 0; q < nq; ++q) {
    int relevant = 0;
    for (Eigen::Index j = 0; j < ng; ++j) relevant += gt[j] == qt[q];
    if (relevant == 0) continue;
    double dcg = 0.0, rr = 0.0;
    for (Eigen::Index j = 0; j < ng; ++j) {
      if (gt[j] != qt[q]) continue;
      int pos = 0;
      for (Eigen::Index o = 0; o < ng; ++o)
        if (sim(q, o) > sim(q, j) || (sim(q, o) == sim(q, j) && o < j)) ++pos;
      if (pos < k) dcg += 1.0 / std::log2(pos + 2.0);
      if (pos == 0) out.hit += 1.0;
      rr = std::max(rr, 1.0 / (pos + 1.0));
    }
    double ideal = 0.0;
    for (int i = 0; i < std::min(k, relevant); ++i) ideal += 1.0 / std::log2(i + 2.0);
    out.ndcg += dcg / ideal;
    out.mrr += rr;
  }
  out.ndcg /= static_cast<double>(nq);
  out.hit /= static_cast<double>(nq);
  out.mrr /= static_cast<double>(nq);
  return out;
}

}  // namespace w2t::testing
