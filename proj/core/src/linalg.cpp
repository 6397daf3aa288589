// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

#include "w2t/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace w2t::linalg {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace

ThinQr householder_qr(const Eigen::MatrixXd& x) {
  const Eigen::Index m = x.rows();
  const Eigen::Index n = x.cols();
  Eigen::MatrixXd r = x;
  // Reflector j is I - 2 v_j v_j^T acting on rows j..m-1; v_j is unit norm or
  // empty (identity).
  std::vector<Eigen::VectorXd> reflectors(static_cast<std::size_t>(n));

  for (Eigen::Index j = 0; j < n; ++j) {
    auto col = r.col(j).tail(m - j);
    const double norm = col.norm();
    if (norm == 0.0) continue;
    const double alpha = col(0) >= 0.0 ? -norm : norm;
    Eigen::VectorXd v = col;
    v(0) -= alpha;
    const double vnorm = v.norm();
    if (vnorm == 0.0) continue;
    v /= vnorm;
    auto block = r.bottomRightCorner(m - j, n - j);
    const Eigen::RowVectorXd proj = v.transpose() * block;
    block.noalias() -= 2.0 * v * proj;
    r.col(j).tail(m - j - 1).setZero();
    reflectors[static_cast<std::size_t>(j)] = std::move(v);
  }

  ThinQr out;
  out.q = Eigen::MatrixXd::Identity(m, n);
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const auto& v = reflectors[static_cast<std::size_t>(j)];
    if (v.size() == 0) continue;
    auto block = out.q.bottomRows(m - j);
    const Eigen::RowVectorXd proj = v.transpose() * block;
    block.noalias() -= 2.0 * v * proj;
  }
  out.r = r.topRows(n).triangularView<Eigen::Upper>();
  return out;
}

void complete_orthonormal(Eigen::MatrixXd& q, Eigen::Index filled) {
  const Eigen::Index m = q.rows();
  Eigen::Index next = filled;
  for (Eigen::Index e = 0; e < m && next < q.cols(); ++e) {
    Eigen::VectorXd cand = Eigen::VectorXd::Unit(m, e);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index k = 0; k < next; ++k) cand -= q.col(k).dot(cand) * q.col(k);
    const double norm = cand.norm();
    if (norm < 0.5) continue;  // e is (nearly) inside the current span
    q.col(next++) = cand / norm;
  }
}

SmallSvd jacobi_svd(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.cols();
  Eigen::MatrixXd w = m;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double alpha = w.col(p).squaredNorm();
        const double beta = w.col(q).squaredNorm();
        const double gamma = w.col(p).dot(w.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          const double wp = w(i, p);
          const double wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  SmallSvd out;
  out.sigma = w.colwise().norm().transpose();
  out.v = std::move(v);
  const double smax = out.sigma.size() ? out.sigma.maxCoeff() : 0.0;
  const double tol = static_cast<double>(n) * kEps * smax;

  // Non-null columns first so the completion sees them; then restore order.
  std::vector<Eigen::Index> live, dead;
  for (Eigen::Index k = 0; k < n; ++k) (out.sigma(k) > tol && smax > 0.0 ? live : dead).push_back(k);
  Eigen::MatrixXd u(w.rows(), n);
  Eigen::Index filled = 0;
  for (Eigen::Index k : live) u.col(filled++) = w.col(k) / out.sigma(k);
  complete_orthonormal(u, filled);
  out.u.resize(w.rows(), n);
  filled = 0;
  for (Eigen::Index k : live) out.u.col(k) = u.col(filled++);
  for (Eigen::Index k : dead) {
    out.u.col(k) = u.col(filled++);
    out.sigma(k) = 0.0;
  }
  return out;
}

TruncatedSvd lanczos_svd(const Eigen::MatrixXd& x, Eigen::Index k) {
  const Eigen::Index m = x.rows();
  const Eigen::Index n = x.cols();
  const Eigen::Index max_steps = std::min<Eigen::Index>(std::min(m, n), k + 8);

  Eigen::MatrixXd us(m, max_steps);
  Eigen::MatrixXd vs(n, max_steps);
  std::vector<double> alphas, betas;

  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  v.normalize();

  const double tol = kEps * x.norm() * std::sqrt(static_cast<double>(std::max(m, n)));
  Eigen::Index steps = 0;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
  double beta = 0.0;
  while (steps < max_steps) {
    vs.col(steps) = v;
    Eigen::VectorXd uu = x * v - beta * u;
    for (int pass = 0; pass < 2; ++pass)
      uu.noalias() -= us.leftCols(steps) * (us.leftCols(steps).transpose() * uu);
    const double alpha = uu.norm();
    if (alpha <= tol) break;
    u = uu / alpha;
    us.col(steps) = u;
    alphas.push_back(alpha);
    ++steps;

    Eigen::VectorXd w = x.transpose() * u - alpha * v;
    for (int pass = 0; pass < 2; ++pass)
      w.noalias() -= vs.leftCols(steps) * (vs.leftCols(steps).transpose() * w);
    beta = w.norm();
    if (beta <= tol || steps == max_steps) break;
    v = w / beta;
    betas.push_back(beta);
  }

  TruncatedSvd out;
  out.u = Eigen::MatrixXd::Zero(m, k);
  out.v = Eigen::MatrixXd::Zero(n, k);
  out.sigma = Eigen::VectorXd::Zero(k);
  Eigen::Index have = 0;
  if (steps > 0) {
    Eigen::MatrixXd bidiag = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      bidiag(i, i) = alphas[static_cast<std::size_t>(i)];
      if (i + 1 < steps) bidiag(i, i + 1) = betas[static_cast<std::size_t>(i)];
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(bidiag, Eigen::ComputeFullU | Eigen::ComputeFullV);
    have = std::min(k, steps);
    out.u.leftCols(have) = us.leftCols(steps) * svd.matrixU().leftCols(have);
    out.v.leftCols(have) = vs.leftCols(steps) * svd.matrixV().leftCols(have);
    out.sigma.head(have) = svd.singularValues().head(have);
  }
  complete_orthonormal(out.u, have);
  complete_orthonormal(out.v, have);
  return out;
}

double condition_number(const Eigen::MatrixXd& m) {
  const SmallSvd svd = jacobi_svd(m);
  const double smax = svd.sigma.maxCoeff();
  const double smin = svd.sigma.minCoeff();
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

}  // namespace w2t::linalg
