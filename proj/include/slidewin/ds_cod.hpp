#pragma once

// Dump-snapshot co-occurring directions: a COD residual that sheds its heavy
// aligned directions as timestamped snapshots once they reach a threshold.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "slidewin/decomp.hpp"
#include "slidewin/types.hpp"

namespace slidewin {

/// A dumped aligned column pair. `weight` is ||a|| ||b||.
template <typename Scalar = double>
struct Snapshot {
  Eigen::VectorX<Scalar> a;
  Eigen::VectorX<Scalar> b;
  Timestamp t = 0;
  Scalar weight = 0;
  Scalar theta = 0;  // threshold in force when the snapshot was dumped
};

/// Triangular factors of the residual buffers and the SVD of Rx * Ry^T.
/// Any Rx with Rx^T Rx = A^T A works, which is what lets the quick-check
/// recover them from the covariance matrices instead of a QR.
template <typename Scalar = double>
struct CoreFactors {
  Eigen::MatrixX<Scalar> Rx;
  Eigen::MatrixX<Scalar> Ry;
  Eigen::MatrixX<Scalar> U;
  Eigen::VectorX<Scalar> sigma;
  Eigen::MatrixX<Scalar> V;
};

/// Rx = sqrt(D_A) L_A^T and Ry = sqrt(D_B) L_B^T from LDL of the covariances.
template <typename DerivedA, typename DerivedB>
CoreFactors<typename DerivedA::Scalar> core_factors(const Eigen::MatrixBase<DerivedA>& KA,
                                                    const Eigen::MatrixBase<DerivedB>& KB,
                                                    const Tolerances& tol = {}) {
  using Scalar = typename DerivedA::Scalar;
  const auto la = ldl_factor(KA, tol);
  const auto lb = ldl_factor(KB, tol);
  CoreFactors<Scalar> f;
  f.Rx = la.D.cwiseSqrt().asDiagonal() * la.L.transpose();
  f.Ry = lb.D.cwiseSqrt().asDiagonal() * lb.L.transpose();
  auto svd = product_svd(f.Rx, f.Ry);
  f.U = std::move(svd.U);
  f.sigma = std::move(svd.sigma);
  f.V = std::move(svd.V);
  return f;
}

/// Column j of the aligned pair without forming Q_x or Q_y:
/// a = A Ry^T v_j / sqrt(sigma_j), b = B Rx^T u_j / sqrt(sigma_j).
template <typename DerivedA, typename DerivedB>
std::pair<Eigen::VectorX<typename DerivedA::Scalar>, Eigen::VectorX<typename DerivedA::Scalar>>
extract_snapshot(const Eigen::MatrixBase<DerivedA>& A, const Eigen::MatrixBase<DerivedB>& B,
                 const CoreFactors<typename DerivedA::Scalar>& f, Index j,
                 typename DerivedA::Scalar sigma_floor = 0) {
  using Scalar = typename DerivedA::Scalar;
  if (j < 0 || j >= f.sigma.size()) throw std::out_of_range("extract_snapshot: bad component index");
  const Scalar s = f.sigma(j);
  if (!(s > sigma_floor)) throw std::domain_error("extract_snapshot: singular value below floor");
  const Scalar inv_root = Scalar(1) / std::sqrt(s);
  Eigen::VectorX<Scalar> a = inv_root * (A * (f.Ry.transpose() * f.V.col(j)));
  Eigen::VectorX<Scalar> b = inv_root * (B * (f.Rx.transpose() * f.U.col(j)));
  return {std::move(a), std::move(b)};
}

/// Removes component j of the aligned pair from the buffers in place.
///
/// With p = Ry^T v_j, q = Rx^T u_j and P_A = p q^T / sigma_j:
///   A <- A - A P_A,  B <- B - B P_B  (P_B = q p^T / sigma_j)
/// and the covariances follow the factored form
///   K_A <- A^T Abar - P_A^T A^T Abar,  A^T Abar = K_A - K_A P_A
/// at O(k^2) cost. Other components of the SVD in `f` remain valid afterwards.
template <typename Scalar>
void remove_component(Eigen::Ref<Eigen::MatrixX<Scalar>> A, Eigen::Ref<Eigen::MatrixX<Scalar>> B,
                      Eigen::Ref<Eigen::MatrixX<Scalar>> KA, Eigen::Ref<Eigen::MatrixX<Scalar>> KB,
                      const CoreFactors<Scalar>& f, Index j, Scalar sigma_floor = 0) {
  using Vector = Eigen::VectorX<Scalar>;
  using Matrix = Eigen::MatrixX<Scalar>;
  if (j < 0 || j >= f.sigma.size()) throw std::out_of_range("remove_component: bad component index");
  const Scalar s = f.sigma(j);
  if (!(s > sigma_floor)) throw std::domain_error("remove_component: singular value below floor");
  const Scalar inv = Scalar(1) / s;
  const Vector p = f.Ry.transpose() * f.V.col(j);
  const Vector q = f.Rx.transpose() * f.U.col(j);

  A.noalias() -= (inv * (A * p)) * q.transpose();
  B.noalias() -= (inv * (B * q)) * p.transpose();

  Matrix cross = KA;
  cross.noalias() -= (inv * (KA * p)) * q.transpose();
  KA = cross;
  KA.noalias() -= (inv * q) * (p.transpose() * cross);
  KA = (0.5 * (KA + KA.transpose())).eval();

  cross = KB;
  cross.noalias() -= (inv * (KB * q)) * p.transpose();
  KB = cross;
  KB.noalias() -= (inv * p) * (q.transpose() * cross);
  KB = (0.5 * (KB + KB.transpose())).eval();
}

struct DsCodOptions {
  Tolerances tol{};
  /// Quick-checks between dense recomputations of K_A and K_B.
  int dense_refresh_interval = 64;
  /// Recheck the residual invariants after every update (slow; for tests).
  bool check_invariants = false;
};

/// What one update did.
struct UpdateOutcome {
  bool shrank = false;         // buffer was full and went through correlation shrinkage
  bool quick_checked = false;  // psi crossed theta and the quick-check ran
  std::size_t dumped = 0;      // snapshots appended
};

/// Counters of invariant failures seen with DsCodOptions::check_invariants.
struct InvariantViolations {
  std::size_t psi_bound = 0;
  std::size_t dump_completeness = 0;
  std::size_t covariance = 0;
  std::size_t snapshot_weight = 0;
  std::size_t total() const { return psi_bound + dump_completeness + covariance + snapshot_weight; }
};

/// Single DS-COD sketch: residual buffers A, B (at most 2*ell columns), their
/// covariances, the snapshot queue, the tracker psi and the dump threshold theta.
///
/// Not thread-safe; updates must be serialized by the caller.
template <typename Scalar = double>
class DsCod {
 public:
  using Matrix = Eigen::MatrixX<Scalar>;
  using Vector = Eigen::VectorX<Scalar>;

  /// Dimensions are taken from the first non-trivial update.
  DsCod(Index ell, Scalar theta, DsCodOptions opts = {}) : DsCod(0, 0, ell, theta, opts) {}

  DsCod(Index m_x, Index m_y, Index ell, Scalar theta, DsCodOptions opts = {})
      : ell_(ell), theta_(theta), opts_(opts) {
    if (ell < 1) throw std::invalid_argument("DsCod: sketch size must be positive");
    if (!(theta > 0) || !std::isfinite(static_cast<double>(theta)))
      throw std::invalid_argument("DsCod: threshold must be positive");
    if (m_x < 0 || m_y < 0) throw std::invalid_argument("DsCod: negative dimension");
    if (opts.dense_refresh_interval < 1)
      throw std::invalid_argument("DsCod: dense refresh interval must be positive");
    if (m_x > 0 && m_y > 0) allocate(m_x, m_y);
  }

  UpdateOutcome update(const ColumnPair<Scalar>& col) { return update(col.x, col.y, col.t); }

  template <typename DerivedX, typename DerivedY>
  UpdateOutcome update(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                       Timestamp t) {
    if (t <= last_ts_)
      throw std::invalid_argument("DsCod::update: timestamp " + std::to_string(t) +
                                  " does not follow " + std::to_string(last_ts_));
    if (m_x_ == 0) allocate(x.size(), y.size());
    if (x.size() != m_x_ || y.size() != m_y_)
      throw std::invalid_argument("DsCod::update: column dimension mismatch");
    if (!x.allFinite() || !y.allFinite())
      throw std::invalid_argument("DsCod::update: non-finite entry");
    last_ts_ = t;

    UpdateOutcome out;
    const Scalar weight = x.norm() * y.norm();
    if (weight == Scalar(0)) return out;  // zero pair only advances time

    psi_ += weight;
    if (cols_ + 1 >= 2 * ell_) {
      out.shrank = true;
      out.dumped = shrink_and_dump(x, y, t);
    } else {
      append(x, y);
      if (psi_ >= theta_) {
        out.quick_checked = true;
        out.dumped = quick_check(t);
      }
    }
    if (opts_.check_invariants) verify(out.shrank || out.quick_checked);
    return out;
  }

  /// Dumps every aligned component of the residual whose singular value is at
  /// least theta, then resets psi to the first singular value left behind.
  /// Returns the number of snapshots appended.
  std::size_t quick_check(Timestamp now) {
    if (cols_ == 0) {
      psi_ = 0;
      return 0;
    }
    CoreFactors<Scalar> f = factors_with_fallback();
    const Index k = f.sigma.size();
    const Scalar floor = sigma_floor();
    std::size_t dumped = 0;
    Index j = 0;
    for (; j < k; ++j) {
      const Scalar s = f.sigma(j);
      if (s < theta_ || s <= floor) break;
      auto [a, b] = extract_snapshot(a_view(), b_view(), f, j, floor);
      push_snapshot(std::move(a), std::move(b), now);
      remove_component<Scalar>(a_view(), b_view(), ka_view(), kb_view(), f, j, floor);
      ++dumped;
    }
    // Every component went out, so nothing is left behind.
    psi_ = (j < k) ? f.sigma(j) : Scalar(0);

    if (++quick_checks_ % opts_.dense_refresh_interval == 0) refresh_covariances();
    return dumped;
  }

  /// Drops snapshots from the head while they have left the window
  /// (t + window <= now) or while the queue is longer than `max_len`.
  std::size_t expire(Timestamp now, Timestamp window, std::optional<std::size_t> max_len = {}) {
    std::size_t removed = 0;
    while (!snapshots_.empty() &&
           (snapshots_.front().t + window <= now || (max_len && snapshots_.size() > *max_len))) {
      if (snapshots_.front().t + window > now) last_cap_drop_ = snapshots_.front().t;
      snapshots_.pop_front();
      ++removed;
    }
    return removed;
  }

  /// True when no snapshot still inside (now - window, now] was dropped by a count cap.
  bool covers_window(Timestamp now, Timestamp window) const {
    return last_cap_drop_ == 0 || last_cap_drop_ + window <= now;
  }
  Timestamp last_cap_drop() const { return last_cap_drop_; }

  /// Back to the freshly initialized state, keeping ell, theta, dimensions and the clock.
  void reset() {
    cols_ = 0;
    psi_ = 0;
    quick_checks_ = 0;
    last_cap_drop_ = 0;
    snapshots_.clear();
    if (m_x_ > 0) {
      a_buf_.setZero();
      b_buf_.setZero();
      ka_buf_.setZero();
      kb_buf_.setZero();
    }
  }

  void set_threshold(Scalar theta) {
    if (!(theta > 0)) throw std::invalid_argument("DsCod: threshold must be positive");
    theta_ = theta;
  }

  auto A() const { return a_buf_.leftCols(cols_); }
  auto B() const { return b_buf_.leftCols(cols_); }
  auto K_A() const { return ka_buf_.topLeftCorner(cols_, cols_); }
  auto K_B() const { return kb_buf_.topLeftCorner(cols_, cols_); }
  const std::deque<Snapshot<Scalar>>& snapshots() const { return snapshots_; }

  Index ell() const { return ell_; }
  Index cols() const { return cols_; }
  Index rows_x() const { return m_x_; }
  Index rows_y() const { return m_y_; }
  Scalar psi() const { return psi_; }
  Scalar theta() const { return theta_; }
  Scalar sigma_floor() const { return Scalar(1e-10) * theta_; }
  Timestamp last_timestamp() const { return last_ts_; }
  const InvariantViolations& violations() const { return violations_; }

  /// Live columns: residual buffer plus one per snapshot.
  Index space_cols() const { return cols_ + static_cast<Index>(snapshots_.size()); }

  /// Snapshots with t + window > now.
  std::size_t live_snapshots(Timestamp now, Timestamp window) const {
    std::size_t n = 0;
    for (const auto& s : snapshots_) n += (s.t + window > now) ? 1 : 0;
    return n;
  }

 private:
  void allocate(Index m_x, Index m_y) {
    if (m_x < 1 || m_y < 1) throw std::invalid_argument("DsCod: dimensions must be positive");
    m_x_ = m_x;
    m_y_ = m_y;
    a_buf_ = Matrix::Zero(m_x, 2 * ell_);
    b_buf_ = Matrix::Zero(m_y, 2 * ell_);
    ka_buf_ = Matrix::Zero(2 * ell_, 2 * ell_);
    kb_buf_ = Matrix::Zero(2 * ell_, 2 * ell_);
  }

  auto a_view() { return a_buf_.leftCols(cols_); }
  auto b_view() { return b_buf_.leftCols(cols_); }
  auto ka_view() { return ka_buf_.topLeftCorner(cols_, cols_); }
  auto kb_view() { return kb_buf_.topLeftCorner(cols_, cols_); }

  template <typename DerivedX, typename DerivedY>
  void append(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    const Index k = cols_;
    // Border the covariances with the new column before it joins the buffer.
    ka_buf_.col(k).head(k).noalias() = a_view().transpose() * x;
    ka_buf_.row(k).head(k) = ka_buf_.col(k).head(k).transpose();
    ka_buf_(k, k) = x.squaredNorm();
    kb_buf_.col(k).head(k).noalias() = b_view().transpose() * y;
    kb_buf_.row(k).head(k) = kb_buf_.col(k).head(k).transpose();
    kb_buf_(k, k) = y.squaredNorm();
    a_buf_.col(k) = x;
    b_buf_.col(k) = y;
    ++cols_;
  }

  template <typename DerivedX, typename DerivedY>
  std::size_t shrink_and_dump(const Eigen::MatrixBase<DerivedX>& x,
                              const Eigen::MatrixBase<DerivedY>& y, Timestamp t) {
    Matrix ax(m_x_, cols_ + 1);
    Matrix by(m_y_, cols_ + 1);
    ax << a_view(), x;
    by << b_view(), y;
    auto shrunk = detail::shrink_aligned(ax, by, ell_);

    // The shrunk pair is aligned, so its leading columns dump directly.
    const Index kept = shrunk.sigma.size();
    Index first = 0;
    while (first < kept && shrunk.sigma(first) >= theta_) {
      push_snapshot(shrunk.A.col(first), shrunk.B.col(first), t);
      ++first;
    }
    cols_ = kept - first;
    a_buf_.setZero();
    b_buf_.setZero();
    a_buf_.leftCols(cols_) = shrunk.A.middleCols(first, cols_);
    b_buf_.leftCols(cols_) = shrunk.B.middleCols(first, cols_);
    refresh_covariances();
    psi_ = (cols_ > 0) ? shrunk.sigma(first) : Scalar(0);
    return static_cast<std::size_t>(first);
  }

  void push_snapshot(Vector a, Vector b, Timestamp t) {
    Snapshot<Scalar> s;
    s.weight = a.norm() * b.norm();
    s.a = std::move(a);
    s.b = std::move(b);
    s.t = t;
    s.theta = theta_;
    snapshots_.push_back(std::move(s));
  }

  void refresh_covariances() {
    ka_buf_.setZero();
    kb_buf_.setZero();
    ka_view().noalias() = a_view().transpose() * a_view();
    kb_view().noalias() = b_view().transpose() * b_view();
  }

  CoreFactors<Scalar> factors_with_fallback() {
    try {
      return core_factors(K_A(), K_B(), opts_.tol);
    } catch (const std::domain_error&) {
      refresh_covariances();
    }
    try {
      return core_factors(K_A(), K_B(), opts_.tol);
    } catch (const std::domain_error& e) {
      throw std::runtime_error(std::string("DsCod::quick_check: covariance not PSD after dense "
                                           "recomputation: ") + e.what());
    }
  }

  Scalar residual_sigma_max() const {
    if (cols_ == 0) return Scalar(0);
    const auto qx = detail::economy_qr(A());
    const auto qy = detail::economy_qr(B());
    const Matrix core = qx.R * qy.R.transpose();
    if (core.size() == 0) return Scalar(0);
    return Eigen::JacobiSVD<Matrix>(core).singularValues()(0);
  }

  void verify(bool dumping_ran) {
    const Scalar s1 = residual_sigma_max();
    if (s1 > psi_ * Scalar(1 + 1e-6) + Scalar(1e-9)) ++violations_.psi_bound;
    if (dumping_ran && !(s1 < theta_ * Scalar(1 + 1e-6))) ++violations_.dump_completeness;
    const Matrix ata = A().transpose() * A();
    const Matrix btb = B().transpose() * B();
    auto drift = [](const Matrix& K, const Matrix& exact) {
      if (exact.size() == 0) return false;
      return (K - exact).cwiseAbs().maxCoeff() >
             Scalar(1e-6) * (Scalar(1) + exact.cwiseAbs().maxCoeff());
    };
    if (drift(K_A(), ata) || drift(K_B(), btb)) ++violations_.covariance;
    for (const auto& s : snapshots_)
      if (s.weight < s.theta * Scalar(1 - 1e-9)) {
        ++violations_.snapshot_weight;
        break;
      }
  }

  Index ell_;
  Scalar theta_;
  DsCodOptions opts_;
  Index m_x_ = 0;
  Index m_y_ = 0;
  Index cols_ = 0;
  Matrix a_buf_, b_buf_, ka_buf_, kb_buf_;
  std::deque<Snapshot<Scalar>> snapshots_;
  Scalar psi_ = 0;
  Timestamp last_ts_ = 0;
  long quick_checks_ = 0;
  Timestamp last_cap_drop_ = 0;
  InvariantViolations violations_;
};

}  // namespace slidewin
