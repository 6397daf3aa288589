// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Canonical rank-wise SVD of a LoRA update dW = B A, computed from the stored
// factors without ever forming the d_out x d_in product:
//
//   B = Q_B R_B,  A^T = Q_A R_A,  M = R_B R_A^T = U_M S V_M^T
//   U = Q_B U_M,  V = Q_A V_M,   dW = U S V^T
//
// The result is unique under the sign/ordering convention below (up to
// rotations inside exactly degenerate singular-value clusters), so every
// GL(r) reparameterization (B G, G^-1 A) maps to the same object.

#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "w2t/interchange.hpp"
#include "w2t/types.hpp"

namespace w2t::canon {

using interchange::BasicFactorPair;
using interchange::FactorPair;

template <typename T>
struct BasicCanonicalUpdate {
  Matrix<T> u;     // d_out x r, orthonormal columns
  Vector<T> sigma;  // r, non-negative, non-increasing
  Matrix<T> v;     // d_in x r, orthonormal columns

  Eigen::Index rank() const { return sigma.size(); }
};
using CanonicalUpdate = BasicCanonicalUpdate<float>;

/// Sign convention: in every column k of U, the largest-magnitude entry
/// (smallest row index on ties) is non-negative; U[:,k] and V[:,k] flip
/// together. Ordering: descending sigma, exact ties broken by lexicographic
/// order of the sign-fixed U columns (smaller first). Idempotent.
template <typename T>
void apply_convention(BasicCanonicalUpdate<T>& c);

template <typename T>
bool satisfies_convention(const BasicCanonicalUpdate<T>& c);

/// QR + core-SVD canonization. Cost O((d_out + d_in) r^2 + r^3); internal
/// arithmetic is double, outputs are rounded to T before the convention is
/// applied. Throws kNonFiniteInput, kDegenerateDimensions.
template <typename T>
BasicCanonicalUpdate<T> canonize(const BasicFactorPair<T>& fp);

/// The r x r core M = R_B R_A^T (double precision).
template <typename T>
Eigen::MatrixXd core_matrix(const BasicFactorPair<T>& fp);

inline constexpr std::int64_t kOracleMaxEntries = std::int64_t{1} << 24;

/// Reference path: forms dW = B A explicitly (double), takes its leading r
/// singular triplets and applies the same convention. Small matrices use a
/// full dense SVD; larger ones use Lanczos bidiagonalization on the stored
/// dense matrix. Throws kTooLargeForOracle above 2^24 entries.
template <typename T>
BasicCanonicalUpdate<T> dense_svd_oracle(const BasicFactorPair<T>& fp);

/// sigma_k <= eps(T) * sigma_1 * max(d_out, d_in) counts as zero.
template <typename T>
double rank_tolerance(const BasicCanonicalUpdate<T>& c);

struct EquivReport {
  double sigma_gap = 0.0;
  double update_gap = 0.0;
  double u_subspace_cos = 1.0;
  double v_subspace_cos = 1.0;
  double time_direct_ms = 0.0;
  double time_qr_ms = 0.0;
  double speedup = 0.0;  // time_direct_ms / time_qr_ms, 0 when untimed
  // bench metadata
  Eigen::Index d_out = 0;
  Eigen::Index d_in = 0;
  Eigen::Index rank = 0;
  int trials = 0;
};

/// Gaps and principal-angle cosines between two canonical objects of the
/// update fp. The update difference is evaluated inside the span of both
/// factorizations, never materialized. Throws kShapeMismatch.
template <typename T>
EquivReport compare_canonical(const BasicCanonicalUpdate<T>& a, const BasicCanonicalUpdate<T>& b,
                              const BasicFactorPair<T>& fp);

struct GlTransform {
  Eigen::MatrixXd g;  // r x r
  double alpha = 0.0;
};

struct GlSamplerOptions {
  double max_condition = 1e4;
  int max_rejections = 64;
};

/// G = I + alpha * E / sqrt(r), E iid standard normal, resampled until
/// cond(G) <= max_condition. alpha == 0 yields exactly I.
GlTransform sample_gl(Eigen::Index r, double alpha, std::mt19937_64& rng,
                      const GlSamplerOptions& options = {});

/// (B G, G^-1 A), computed in double and rounded to T. Throws kRankMismatch,
/// kSingularG.
template <typename T>
BasicFactorPair<T> apply_gl(const BasicFactorPair<T>& fp, const GlTransform& t);

enum class Precision { kFloat32, kFloat64 };

struct BenchOptions {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> dims;
  Eigen::Index rank = 8;
  int trials = 50;
  std::uint64_t seed = 7;
  Precision precision = Precision::kFloat32;
};

/// Per dims entry: median sigma/update gaps, mean of per-pair minimum
/// subspace cosines, median wall-clock times of both paths. Single-threaded.
/// trials == 0 yields an empty list.
std::vector<EquivReport> bench_equivalence(const BenchOptions& options);

}  // namespace w2t::canon
