// Copyright 2026 The W2T Authors
// SPDX-License-Identifier: Apache-2.0

// Dense kernels behind canonization. Everything here works in double
// precision on column-major Eigen matrices.

#pragma once

#include <Eigen/Dense>

namespace w2t::linalg {

struct ThinQr {
  Eigen::MatrixXd q;  // m x n, orthonormal columns
  Eigen::MatrixXd r;  // n x n, upper triangular
};

/// Householder thin QR of a tall matrix (rows >= cols). Zero columns produce an
/// identity reflector, so Q stays orthonormal for rank-deficient input.
ThinQr householder_qr(const Eigen::MatrixXd& x);

struct SmallSvd {
  Eigen::MatrixXd u;      // n x n
  Eigen::VectorXd sigma;  // n, unsorted
  Eigen::MatrixXd v;      // n x n
};

/// One-sided (Hestenes) Jacobi SVD of a square matrix. Columns whose singular
/// value falls below n * eps * sigma_max are completed to an orthonormal basis
/// deterministically, so U is always orthogonal.
SmallSvd jacobi_svd(const Eigen::MatrixXd& m);

/// Extends the first `filled` orthonormal columns of q to a full orthonormal
/// set using unit vectors e_0, e_1, ... in order (Gram-Schmidt, two passes).
void complete_orthonormal(Eigen::MatrixXd& q, Eigen::Index filled);

struct TruncatedSvd {
  Eigen::MatrixXd u;      // m x k
  Eigen::VectorXd sigma;  // k, non-increasing
  Eigen::MatrixXd v;      // n x k
};

/// Leading k singular triplets of an explicitly stored dense matrix via
/// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization and a
/// fixed start vector. Exact (to rounding) when rank(x) <= k.
TruncatedSvd lanczos_svd(const Eigen::MatrixXd& x, Eigen::Index k);

/// sigma_max / sigma_min, infinity for singular input.
double condition_number(const Eigen::MatrixXd& m);

}  // namespace w2t::linalg
