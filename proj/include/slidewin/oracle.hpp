#pragma once

// Exact window bookkeeping and the correlation-error metric used as ground truth.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <stdexcept>

#include "slidewin/types.hpp"

namespace slidewin {

struct PowerIterationOptions {
  int max_iterations = 1000;
  double rel_tol = 1e-9;
  std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
};

/// Largest singular value of D by power iteration on D^T D.
/// Deterministic: the start vector comes from a fixed-seed generator.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& D,
                                       const PowerIterationOptions& opts = {}) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::VectorX<Scalar>;
  if (D.size() == 0) return Scalar(0);
  const Eigen::MatrixX<Scalar> M = D;

  std::mt19937_64 gen(opts.seed);
  Vector v(M.cols());
  for (Index i = 0; i < v.size(); ++i)
    v(i) = Scalar(1) + static_cast<Scalar>((gen() >> 11) * 0x1.0p-53);
  v.normalize();

  Scalar lambda = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const Vector w = M.transpose() * (M * v);
    const Scalar next = v.dot(w);
    const Scalar wn = w.norm();
    if (wn == Scalar(0)) return Scalar(0);
    v = w / wn;
    const bool done = std::abs(next - lambda) <= Scalar(opts.rel_tol) * std::abs(next);
    lambda = next;
    if (done) break;
  }
  // One Rayleigh quotient on the final iterate.
  return std::sqrt(std::max(Scalar(0), (M * v).squaredNorm()));
}

template <typename Scalar = double>
struct ErrorReport {
  Scalar corr_err = 0;
  Scalar spectral_err = 0;
  Scalar fro_x = 0;
  Scalar fro_y = 0;
  Timestamp window_id = 0;
};

/// Exact buffer of the pairs with t in (now - N, now].
template <typename Scalar = double>
class WindowOracle {
 public:
  using Matrix = Eigen::MatrixX<Scalar>;

  WindowOracle(Index m_x, Index m_y, Timestamp window) : m_x_(m_x), m_y_(m_y), window_(window) {
    if (m_x < 1 || m_y < 1) throw std::invalid_argument("WindowOracle: dimensions must be positive");
    if (window < 1) throw std::invalid_argument("WindowOracle: window must be at least 1");
  }

  void push(ColumnPair<Scalar> col) {
    if (col.t <= now_) throw std::invalid_argument("WindowOracle: timestamps must increase");
    if (col.x.size() != m_x_ || col.y.size() != m_y_)
      throw std::invalid_argument("WindowOracle: column dimension mismatch");
    now_ = col.t;
    add(col);
    buffer_.push_back(std::move(col));
    while (!buffer_.empty() && buffer_.front().t + window_ <= now_) {
      remove(buffer_.front());
      buffer_.pop_front();
    }
  }

  /// X_W * Y_W^T, recomputed from the buffer.
  Matrix exact_product() const {
    const Index n = static_cast<Index>(buffer_.size());
    if (n == 0) return Matrix::Zero(m_x_, m_y_);
    Matrix X(m_x_, n), Y(m_y_, n);
    for (Index i = 0; i < n; ++i) {
      X.col(i) = buffer_[i].x;
      Y.col(i) = buffer_[i].y;
    }
    return X * Y.transpose();
  }

  Scalar fro_x() const { return std::sqrt(sq_x_); }
  Scalar fro_y() const { return std::sqrt(sq_y_); }

  template <typename DerivedA, typename DerivedB>
  ErrorReport<Scalar> corr_err(const Eigen::MatrixBase<DerivedA>& A,
                               const Eigen::MatrixBase<DerivedB>& B) const {
    if (A.rows() != m_x_ || B.rows() != m_y_ || A.cols() != B.cols())
      throw std::invalid_argument("WindowOracle::corr_err: sketch dimension mismatch");
    return correlation_error(exact_product() - A * B.transpose(), fro_x(), fro_y(), now_);
  }

  /// Correlation error of a dense difference given the Frobenius norms.
  template <typename Derived>
  static ErrorReport<Scalar> correlation_error(const Eigen::MatrixBase<Derived>& diff, Scalar fx,
                                               Scalar fy, Timestamp id) {
    ErrorReport<Scalar> r;
    r.spectral_err = spectral_norm(diff);
    r.fro_x = fx;
    r.fro_y = fy;
    r.window_id = id;
    const Scalar denom = fx * fy;
    if (denom > Scalar(0))
      r.corr_err = r.spectral_err / denom;
    else
      r.corr_err = r.spectral_err == Scalar(0) ? Scalar(0) : std::numeric_limits<Scalar>::infinity();
    return r;
  }

  const std::deque<ColumnPair<Scalar>>& pairs() const { return buffer_; }
  std::size_t nonzero_pairs() const { return nonzero_; }
  Timestamp now() const { return now_; }
  Timestamp window() const { return window_; }
  Index rows_x() const { return m_x_; }
  Index rows_y() const { return m_y_; }

 private:
  void add(const ColumnPair<Scalar>& c) {
    const Scalar nx = c.x.squaredNorm(), ny = c.y.squaredNorm();
    sq_x_ += nx;
    sq_y_ += ny;
    nz_x_ += nx > 0;
    nz_y_ += ny > 0;
    nonzero_ += (nx > 0 && ny > 0);
  }

  void remove(const ColumnPair<Scalar>& c) {
    const Scalar nx = c.x.squaredNorm(), ny = c.y.squaredNorm();
    sq_x_ -= nx;
    sq_y_ -= ny;
    nz_x_ -= nx > 0;
    nz_y_ -= ny > 0;
    nonzero_ -= (nx > 0 && ny > 0);
    // Subtraction leaves roundoff behind once the window empties.
    if (nz_x_ == 0 || sq_x_ < 0) sq_x_ = 0;
    if (nz_y_ == 0 || sq_y_ < 0) sq_y_ = 0;
  }

  Index m_x_, m_y_;
  Timestamp window_;
  Timestamp now_ = 0;
  std::deque<ColumnPair<Scalar>> buffer_;
  Scalar sq_x_ = 0, sq_y_ = 0;
  std::size_t nz_x_ = 0, nz_y_ = 0, nonzero_ = 0;
};

}  // namespace slidewin
