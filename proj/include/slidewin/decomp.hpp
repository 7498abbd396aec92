#pragma once

// Dense factorizations and the correlation-shrinkage step shared by every sketch.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "slidewin/types.hpp"

namespace slidewin {

/// Numerical tolerances for the factorization routines.
struct Tolerances {
  double symmetry = 1e-9;      // accepted |K - K^T|, relative to 1 + max|K|
  double psd = 1e-9;           // most negative pivot accepted as roundoff, relative to the trace
  double pivot_clamp = 1e-12;  // pivots below this fraction of the trace are zeroed
};

template <typename Scalar>
struct QrFactors {
  Eigen::MatrixX<Scalar> Q;  // orthonormal columns
  Eigen::MatrixX<Scalar> R;  // upper triangular (trapezoidal when A is wide)
};

template <typename Scalar>
struct LdlFactors {
  Eigen::MatrixX<Scalar> L;  // unit lower triangular
  Eigen::VectorX<Scalar> D;  // non-negative
};

template <typename Scalar>
struct SvdFactors {
  Eigen::MatrixX<Scalar> U;
  Eigen::VectorX<Scalar> sigma;  // non-increasing
  Eigen::MatrixX<Scalar> V;
};

/// A pair of factor matrices whose product A * B^T approximates something.
template <typename Scalar>
struct SketchPair {
  Eigen::MatrixX<Scalar> A;
  Eigen::MatrixX<Scalar> B;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& M, const char* what) {
  if (!M.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

/// Householder QR returning min(m, n) orthonormal columns, also for wide inputs.
template <typename Derived>
QrFactors<typename Derived::Scalar> economy_qr(const Eigen::MatrixBase<Derived>& A) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::MatrixX<Scalar>;
  const Index m = A.rows();
  const Index n = A.cols();
  const Index k = std::min(m, n);
  QrFactors<Scalar> f;
  if (k == 0) {
    f.Q = Matrix::Zero(m, 0);
    f.R = Matrix::Zero(0, n);
    return f;
  }
  Eigen::HouseholderQR<Matrix> qr(A);
  f.Q = qr.householderQ() * Matrix::Identity(m, k);
  f.R = qr.matrixQR().topRows(k);
  for (Index j = 0; j < n; ++j)
    for (Index i = j + 1; i < k; ++i) f.R(i, j) = Scalar(0);
  return f;
}

/// Aligned pair after shrinkage, keeping only the columns with positive weight.
template <typename Scalar>
struct ShrunkPair {
  Eigen::MatrixX<Scalar> A;
  Eigen::MatrixX<Scalar> B;
  Eigen::VectorX<Scalar> sigma;  // shrunk singular values, all > 0, non-increasing
};

}  // namespace detail

/// Thin QR of a tall (or square) matrix.
template <typename Derived>
QrFactors<typename Derived::Scalar> qr_factor(const Eigen::MatrixBase<Derived>& A) {
  if (A.cols() > A.rows()) throw std::invalid_argument("qr_factor: more columns than rows");
  detail::require_finite(A, "qr_factor");
  return detail::economy_qr(A);
}

/// Unpivoted L*D*L^T of a symmetric positive semidefinite matrix.
///
/// Pivots below `pivot_clamp * trace` are treated as exact zeros: D gets 0 and the
/// corresponding column of L below the diagonal is cleared. A pivot more negative
/// than `-psd * trace` means the input is not PSD and raises std::domain_error.
template <typename Derived>
LdlFactors<typename Derived::Scalar> ldl_factor(const Eigen::MatrixBase<Derived>& K,
                                                const Tolerances& tol = {}) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::MatrixX<Scalar>;
  if (K.rows() != K.cols()) throw std::invalid_argument("ldl_factor: matrix is not square");
  detail::require_finite(K, "ldl_factor");
  const Index n = K.rows();
  LdlFactors<Scalar> f{Matrix::Identity(n, n), Eigen::VectorX<Scalar>::Zero(n)};
  if (n == 0) return f;

  const Scalar kmax = K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > Scalar(tol.symmetry) * (Scalar(1) + kmax))
    throw std::invalid_argument("ldl_factor: matrix is not symmetric");

  const Scalar trace = std::max(K.trace(), Scalar(0));
  const Scalar clamp = Scalar(tol.pivot_clamp) * trace;
  const Scalar floor = -Scalar(tol.psd) * std::max(trace, Scalar(1));

  for (Index j = 0; j < n; ++j) {
    Scalar d = K(j, j);
    for (Index p = 0; p < j; ++p) d -= f.L(j, p) * f.L(j, p) * f.D(p);
    if (d < floor)
      throw std::domain_error("ldl_factor: matrix is not positive semidefinite (pivot " +
                              std::to_string(static_cast<double>(d)) + ")");
    if (d <= clamp) continue;  // D(j) stays 0, column j of L stays e_j
    f.D(j) = d;
    for (Index i = j + 1; i < n; ++i) {
      Scalar s = K(i, j);
      for (Index p = 0; p < j; ++p) s -= f.L(i, p) * f.L(j, p) * f.D(p);
      f.L(i, j) = s / d;
    }
  }
  return f;
}

/// SVD of the small core Rx * Ry^T, singular values in non-increasing order.
template <typename DerivedX, typename DerivedY>
SvdFactors<typename DerivedX::Scalar> product_svd(const Eigen::MatrixBase<DerivedX>& Rx,
                                                  const Eigen::MatrixBase<DerivedY>& Ry) {
  using Scalar = typename DerivedX::Scalar;
  using Matrix = Eigen::MatrixX<Scalar>;
  if (Rx.cols() != Ry.cols()) throw std::invalid_argument("product_svd: inner dimension mismatch");
  const Matrix core = Rx * Ry.transpose();
  if (core.size() == 0) {
    return {Matrix::Zero(core.rows(), 0), Eigen::VectorX<Scalar>::Zero(0),
            Matrix::Zero(core.cols(), 0)};
  }
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Aligned pair (C, D): C * D^T = A * B^T and ||c_j|| ||d_j|| = sigma_j.
template <typename DerivedA, typename DerivedB>
SketchPair<typename DerivedA::Scalar> aligned_pair(const Eigen::MatrixBase<DerivedA>& A,
                                                   const Eigen::MatrixBase<DerivedB>& B) {
  if (A.cols() != B.cols()) throw std::invalid_argument("aligned_pair: column count mismatch");
  detail::require_finite(A, "aligned_pair");
  detail::require_finite(B, "aligned_pair");
  const auto qx = detail::economy_qr(A);
  const auto qy = detail::economy_qr(B);
  const auto svd = product_svd(qx.R, qy.R);
  const auto root = svd.sigma.cwiseSqrt().asDiagonal();
  return {qx.Q * svd.U * root, qy.Q * svd.V * root};
}

namespace detail {

/// Correlation shrinkage without zero padding: subtracts sigma_ell from every
/// singular value of A * B^T and keeps the columns that stay positive.
template <typename DerivedA, typename DerivedB>
ShrunkPair<typename DerivedA::Scalar> shrink_aligned(const Eigen::MatrixBase<DerivedA>& A,
                                                     const Eigen::MatrixBase<DerivedB>& B,
                                                     Index ell) {
  using Scalar = typename DerivedA::Scalar;
  if (A.cols() != B.cols()) throw std::invalid_argument("cs_shrink: column count mismatch");
  if (ell < 1) throw std::invalid_argument("cs_shrink: sketch size must be positive");
  if (ell > A.cols()) throw std::invalid_argument("cs_shrink: sketch size exceeds input columns");
  if (ell > std::min(A.rows(), B.rows()))
    throw std::invalid_argument("cs_shrink: sketch size exceeds min(m_x, m_y)");
  require_finite(A, "cs_shrink");
  require_finite(B, "cs_shrink");

  const auto qx = economy_qr(A);
  const auto qy = economy_qr(B);
  const auto svd = product_svd(qx.R, qy.R);
  const Scalar delta = svd.sigma(ell - 1);

  Index keep = 0;
  while (keep < ell - 1 && svd.sigma(keep) - delta > Scalar(0)) ++keep;
  const Eigen::VectorX<Scalar> shrunk =
      (svd.sigma.head(keep).array() - delta).matrix();
  const auto root = shrunk.cwiseSqrt().asDiagonal();
  return {qx.Q * svd.U.leftCols(keep) * root, qy.Q * svd.V.leftCols(keep) * root, shrunk};
}

}  // namespace detail

/// Correlation shrinkage to exactly `ell` columns (trailing columns zero).
///
/// With sigma the singular values of A * B^T and delta = sigma_ell, the result is the
/// aligned pair of A * B^T with every singular value replaced by max(sigma - delta, 0),
/// so ||A B^T - A' B'^T||_2 = sigma_ell(A B^T).
template <typename DerivedA, typename DerivedB>
SketchPair<typename DerivedA::Scalar> cs_shrink(const Eigen::MatrixBase<DerivedA>& A,
                                                const Eigen::MatrixBase<DerivedB>& B, Index ell) {
  using Matrix = Eigen::MatrixX<typename DerivedA::Scalar>;
  auto s = detail::shrink_aligned(A, B, ell);
  SketchPair<typename DerivedA::Scalar> out{Matrix::Zero(A.rows(), ell),
                                            Matrix::Zero(B.rows(), ell)};
  out.A.leftCols(s.A.cols()) = s.A;
  out.B.leftCols(s.B.cols()) = s.B;
  return out;
}

}  // namespace slidewin
