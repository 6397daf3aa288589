// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/canon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "w2t/error.hpp"
#include "w2t/linalg.hpp"

namespace w2t::canon {
namespace {

template <typename T>
void check_factors(const BasicFactorPair<T>& fp) {
  const auto r = fp.b.cols();
  if (fp.a.rows() != r)
    throw Error(Errc::kShapeMismatch, "B has " + std::to_string(r) + " columns but A has " +
                                          std::to_string(fp.a.rows()) + " rows");
  if (r < 1 || fp.b.rows() < r || fp.a.cols() < r)
    throw Error(Errc::kDegenerateDimensions,
                "need d_out >= r and d_in >= r >= 1, got d_out=" + std::to_string(fp.b.rows()) +
                    " d_in=" + std::to_string(fp.a.cols()) + " r=" + std::to_string(r));
  if (!fp.b.allFinite() || !fp.a.allFinite())
    throw Error(Errc::kNonFiniteInput, "factor pair has NaN/Inf entries");
}

template <typename T>
BasicCanonicalUpdate<T> round_and_normalize(const Eigen::MatrixXd& u, const Eigen::VectorXd& sigma,
                                            const Eigen::MatrixXd& v) {
  BasicCanonicalUpdate<T> out;
  out.u = u.cast<T>();
  out.sigma = sigma.cast<T>();
  out.v = v.cast<T>();
  apply_convention(out);
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Orthonormal basis of span([x y]); the whole space when that is no larger.
Eigen::MatrixXd joint_basis(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols() + y.cols();
  if (rows <= cols) return Eigen::MatrixXd::Identity(rows, rows);
  Eigen::MatrixXd stacked(rows, cols);
  stacked << x, y;
  return linalg::householder_qr(stacked).q;
}

double min_principal_cos(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() == 0) return 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x.transpose() * y);
  return std::clamp(svd.singularValues().minCoeff(), 0.0, 1.0);
}

template <typename T>
Eigen::Index live_columns(const BasicCanonicalUpdate<T>& c) {
  const double tol = rank_tolerance(c);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < c.sigma.size(); ++i)
    if (static_cast<double>(c.sigma(i)) > tol) ++k;
  return k;
}

}  // namespace

template <typename T>
void apply_convention(BasicCanonicalUpdate<T>& c) {
  const Eigen::Index r = c.sigma.size();
  for (Eigen::Index k = 0; k < r; ++k) {
    Eigen::Index best = 0;
    T best_abs = T(-1);
    for (Eigen::Index j = 0; j < c.u.rows(); ++j) {
      const T a = std::abs(c.u(j, k));
      if (a > best_abs) {
        best_abs = a;
        best = j;
      }
    }
    if (c.u.rows() > 0 && c.u(best, k) < T(0)) {
      c.u.col(k) = -c.u.col(k);
      c.v.col(k) = -c.v.col(k);
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(r));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&c](Eigen::Index x, Eigen::Index y) {
    if (c.sigma(x) != c.sigma(y)) return c.sigma(x) > c.sigma(y);
    for (Eigen::Index j = 0; j < c.u.rows(); ++j)
      if (c.u(j, x) != c.u(j, y)) return c.u(j, x) < c.u(j, y);
    return false;
  });
  bool identity = true;
  for (Eigen::Index k = 0; k < r; ++k) identity = identity && order[static_cast<std::size_t>(k)] == k;
  if (identity) return;

  BasicCanonicalUpdate<T> sorted;
  sorted.u.resize(c.u.rows(), r);
  sorted.v.resize(c.v.rows(), r);
  sorted.sigma.resize(r);
  for (Eigen::Index k = 0; k < r; ++k) {
    const auto src = order[static_cast<std::size_t>(k)];
    sorted.u.col(k) = c.u.col(src);
    sorted.v.col(k) = c.v.col(src);
    sorted.sigma(k) = c.sigma(src);
  }
  c = std::move(sorted);
}

template <typename T>
bool satisfies_convention(const BasicCanonicalUpdate<T>& c) {
  for (Eigen::Index k = 0; k < c.sigma.size(); ++k) {
    if (c.sigma(k) < T(0)) return false;
    if (k > 0 && c.sigma(k) > c.sigma(k - 1)) return false;
    Eigen::Index best = 0;
    T best_abs = T(-1);
    for (Eigen::Index j = 0; j < c.u.rows(); ++j) {
      const T a = std::abs(c.u(j, k));
      if (a > best_abs) {
        best_abs = a;
        best = j;
      }
    }
    if (c.u(best, k) < T(0)) return false;
  }
  return true;
}

template <typename T>
Eigen::MatrixXd core_matrix(const BasicFactorPair<T>& fp) {
  check_factors(fp);
  const Eigen::MatrixXd b = fp.b.template cast<double>();
  const Eigen::MatrixXd at = fp.a.transpose().template cast<double>();
  const auto qb = linalg::householder_qr(b);
  const auto qa = linalg::householder_qr(at);
  return qb.r * qa.r.transpose();
}

template <typename T>
BasicCanonicalUpdate<T> canonize(const BasicFactorPair<T>& fp) {
  check_factors(fp);
  const Eigen::MatrixXd b = fp.b.template cast<double>();
  const Eigen::MatrixXd at = fp.a.transpose().template cast<double>();
  const auto qb = linalg::householder_qr(b);
  const auto qa = linalg::householder_qr(at);
  const Eigen::MatrixXd core = qb.r * qa.r.transpose();
  const auto svd = linalg::jacobi_svd(core);
  return round_and_normalize<T>(qb.q * svd.u, svd.sigma, qa.q * svd.v);
}

template <typename T>
BasicCanonicalUpdate<T> dense_svd_oracle(const BasicFactorPair<T>& fp) {
  const std::int64_t entries = static_cast<std::int64_t>(fp.b.rows()) * fp.a.cols();
  if (entries > kOracleMaxEntries)
    throw Error(Errc::kTooLargeForOracle,
                std::to_string(fp.b.rows()) + "x" + std::to_string(fp.a.cols()) +
                    " exceeds the 2^24-entry oracle guard");
  check_factors(fp);
  const Eigen::Index r = fp.rank();
  const Eigen::MatrixXd dense = fp.b.template cast<double>() * fp.a.template cast<double>();

  constexpr Eigen::Index kFullSvdMaxDim = 512;
  if (std::max(dense.rows(), dense.cols()) <= kFullSvdMaxDim) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return round_and_normalize<T>(svd.matrixU().leftCols(r), svd.singularValues().head(r),
                                  svd.matrixV().leftCols(r));
  }
  const auto svd = linalg::lanczos_svd(dense, r);
  return round_and_normalize<T>(svd.u, svd.sigma, svd.v);
}

template <typename T>
double rank_tolerance(const BasicCanonicalUpdate<T>& c) {
  if (c.sigma.size() == 0) return 0.0;
  const double dim = static_cast<double>(std::max(c.u.rows(), c.v.rows()));
  return static_cast<double>(std::numeric_limits<T>::epsilon()) * static_cast<double>(c.sigma(0)) * dim;
}

template <typename T>
EquivReport compare_canonical(const BasicCanonicalUpdate<T>& a, const BasicCanonicalUpdate<T>& b,
                              const BasicFactorPair<T>& fp) {
  const auto r = fp.rank();
  auto shape_ok = [&](const BasicCanonicalUpdate<T>& c) {
    return c.u.rows() == fp.d_out() && c.v.rows() == fp.d_in() && c.u.cols() == r &&
           c.v.cols() == r && c.sigma.size() == r;
  };
  if (fp.a.rows() != r || !shape_ok(a) || !shape_ok(b))
    throw Error(Errc::kShapeMismatch, "canonical objects do not match the factor pair shape");

  EquivReport rep;
  rep.d_out = fp.d_out();
  rep.d_in = fp.d_in();
  rep.rank = r;
  rep.trials = 1;

  const Eigen::VectorXd sa = a.sigma.template cast<double>();
  const Eigen::VectorXd sb = b.sigma.template cast<double>();
  const double sigma_scale = std::max(r > 0 ? sa(0) : 0.0, std::numeric_limits<double>::min());
  rep.sigma_gap = r > 0 ? (sa - sb).cwiseAbs().maxCoeff() / sigma_scale : 0.0;

  const Eigen::MatrixXd ua = a.u.template cast<double>();
  const Eigen::MatrixXd ub = b.u.template cast<double>();
  const Eigen::MatrixXd va = a.v.template cast<double>();
  const Eigen::MatrixXd vb = b.v.template cast<double>();
  const Eigen::MatrixXd qu = joint_basis(ua, ub);
  const Eigen::MatrixXd qv = joint_basis(va, vb);
  const Eigen::MatrixXd core_a = (qu.transpose() * ua) * sa.asDiagonal() * (qv.transpose() * va).transpose();
  const Eigen::MatrixXd core_b = (qu.transpose() * ub) * sb.asDiagonal() * (qv.transpose() * vb).transpose();
  const double ref = std::max(core_matrix(fp).norm(), std::numeric_limits<double>::min());
  rep.update_gap = (core_a - core_b).norm() / ref;

  const Eigen::Index k = std::min(live_columns(a), live_columns(b));
  rep.u_subspace_cos = min_principal_cos(ua.leftCols(k), ub.leftCols(k));
  rep.v_subspace_cos = min_principal_cos(va.leftCols(k), vb.leftCols(k));
  return rep;
}

GlTransform sample_gl(Eigen::Index r, double alpha, std::mt19937_64& rng,
                      const GlSamplerOptions& options) {
  if (r < 1) throw Error(Errc::kInvalidArgument, "rank must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw Error(Errc::kInvalidArgument, "alpha must be a finite non-negative number");
  GlTransform t;
  t.alpha = alpha;
  if (alpha == 0.0) {
    t.g = Eigen::MatrixXd::Identity(r, r);
    return t;
  }
  std::normal_distribution<double> normal;
  const double scale = alpha / std::sqrt(static_cast<double>(r));
  for (int rejections = 0;;) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Identity(r, r);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j) g(i, j) += scale * normal(rng);
    if (linalg::condition_number(g) <= options.max_condition) {
      t.g = std::move(g);
      return t;
    }
    if (++rejections >= options.max_rejections)
      throw Error(Errc::kResampleBudgetExhausted,
                  "no G with condition number <= " + std::to_string(options.max_condition) +
                      " after " + std::to_string(rejections) + " draws");
  }
}

template <typename T>
BasicFactorPair<T> apply_gl(const BasicFactorPair<T>& fp, const GlTransform& t) {
  const auto r = fp.rank();
  if (t.g.rows() != r || t.g.cols() != r)
    throw Error(Errc::kRankMismatch, "G is " + std::to_string(t.g.rows()) + "x" +
                                         std::to_string(t.g.cols()) + ", factor rank is " +
                                         std::to_string(r));
  if (t.g.isIdentity(0.0)) return fp;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(t.g);
  if (!lu.isInvertible()) throw Error(Errc::kSingularG, "G is not invertible");
  const Eigen::MatrixXd g_inv = lu.inverse();
  BasicFactorPair<T> out;
  out.b = (fp.b.template cast<double>() * t.g).template cast<T>();
  out.a = (g_inv * fp.a.template cast<double>()).template cast<T>();
  return out;
}

namespace {

template <typename T>
BasicFactorPair<T> random_pair(Eigen::Index d_out, Eigen::Index d_in, Eigen::Index r,
                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  BasicFactorPair<T> fp;
  fp.b.resize(d_out, r);
  fp.a.resize(r, d_in);
  for (Eigen::Index i = 0; i < fp.b.size(); ++i) fp.b.data()[i] = static_cast<T>(normal(rng));
  for (Eigen::Index i = 0; i < fp.a.size(); ++i) fp.a.data()[i] = static_cast<T>(normal(rng));
  return fp;
}

template <typename T>
EquivReport bench_one(Eigen::Index d_out, Eigen::Index d_in, const BenchOptions& opt,
                      std::size_t dim_index) {
  using clock = std::chrono::steady_clock;
  std::vector<double> sigma_gaps, update_gaps, t_qr, t_direct;
  double u_cos = 0.0, v_cos = 0.0;
  for (int trial = 0; trial < opt.trials; ++trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(dim_index), static_cast<std::uint32_t>(trial)};
    std::mt19937_64 rng(seq);
    const auto fp = random_pair<T>(d_out, d_in, opt.rank, rng);

    const auto t0 = clock::now();
    const auto fast = canonize(fp);
    const auto t1 = clock::now();
    const auto dense = dense_svd_oracle(fp);
    const auto t2 = clock::now();

    const auto rep = compare_canonical(fast, dense, fp);
    sigma_gaps.push_back(rep.sigma_gap);
    update_gaps.push_back(rep.update_gap);
    u_cos += rep.u_subspace_cos;
    v_cos += rep.v_subspace_cos;
    t_qr.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    t_direct.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
  }
  EquivReport out;
  out.d_out = d_out;
  out.d_in = d_in;
  out.rank = opt.rank;
  out.trials = opt.trials;
  out.sigma_gap = median(sigma_gaps);
  out.update_gap = median(update_gaps);
  out.u_subspace_cos = u_cos / opt.trials;
  out.v_subspace_cos = v_cos / opt.trials;
  out.time_qr_ms = median(t_qr);
  out.time_direct_ms = median(t_direct);
  out.speedup = out.time_qr_ms > 0.0 ? out.time_direct_ms / out.time_qr_ms : 0.0;
  return out;
}

}  // namespace

std::vector<EquivReport> bench_equivalence(const BenchOptions& options) {
  std::vector<EquivReport> out;
  if (options.trials <= 0) return out;
  for (std::size_t i = 0; i < options.dims.size(); ++i) {
    const auto [d_out, d_in] = options.dims[i];
    out.push_back(options.precision == Precision::kFloat32
                      ? bench_one<float>(d_out, d_in, options, i)
                      : bench_one<double>(d_out, d_in, options, i));
  }
  return out;
}

#define W2T_CANON_INSTANTIATE(T)                                                              \
  template void apply_convention<T>(BasicCanonicalUpdate<T>&);                                \
  template bool satisfies_convention<T>(const BasicCanonicalUpdate<T>&);                      \
  template Eigen::MatrixXd core_matrix<T>(const BasicFactorPair<T>&);                         \
  template BasicCanonicalUpdate<T> canonize<T>(const BasicFactorPair<T>&);                    \
  template BasicCanonicalUpdate<T> dense_svd_oracle<T>(const BasicFactorPair<T>&);            \
  template double rank_tolerance<T>(const BasicCanonicalUpdate<T>&);                          \
  template EquivReport compare_canonical<T>(const BasicCanonicalUpdate<T>&,                   \
                                            const BasicCanonicalUpdate<T>&,                   \
                                            const BasicFactorPair<T>&);                       \
  template BasicFactorPair<T> apply_gl<T>(const BasicFactorPair<T>&, const GlTransform&);

W2T_CANON_INSTANTIATE(float)
W2T_CANON_INSTANTIATE(double)

#undef W2T_CANON_INSTANTIATE

}  // namespace w2t::canon
