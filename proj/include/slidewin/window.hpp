#pragma once

// Sliding-window sketches built from DS-COD levels, plus the plain COD baseline.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "slidewin/decomp.hpp"
#include "slidewin/ds_cod.hpp"
#include "slidewin/types.hpp"

namespace slidewin {

/// Query result: a correlation sketch of the current window.
template <typename Scalar = double>
struct CorrelationSketch {
  Eigen::MatrixX<Scalar> A;
  Eigen::MatrixX<Scalar> B;
  int level_used = 0;
  Timestamp window_id = 0;
};

/// ell = ceil(1 / eps), the sketch size that yields an eps-level guarantee.
inline Index sketch_size_for(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  return static_cast<Index>(std::ceil(1.0 / eps - 1e-9));
}

/// Smallest L >= 0 with 2^L >= value (0 for value <= 1).
inline int ceil_log2(double value) {
  int L = 0;
  double p = 1.0;
  while (p < value) {
    p *= 2.0;
    ++L;
  }
  return L;
}

/// Level chosen by the query: the highest level holding at least `min_count`
/// live snapshots; failing that, the level with the most (ties to the lower level).
inline int select_query_level(std::span<const std::size_t> counts, std::size_t min_count) {
  if (counts.empty()) throw std::invalid_argument("select_query_level: no levels");
  for (int j = static_cast<int>(counts.size()) - 1; j >= 0; --j)
    if (counts[j] >= min_count) return j;
  int best = 0;
  for (int j = 1; j < static_cast<int>(counts.size()); ++j)
    if (counts[j] > counts[best]) best = j;
  return best;
}

/// How hDS-COD picks the level that answers a query.
enum class QueryRule {
  /// Lowest level whose snapshot queue lost nothing inside the window to the count cap;
  /// falls back to `highest_count` when every level lost something.
  lowest_covering,
  /// select_query_level with min_count = ell.
  highest_count,
};

namespace detail {

/// Stacks a residual buffer with live snapshots and shrinks to ell columns.
template <typename Scalar>
CorrelationSketch<Scalar> merge_and_shrink(const DsCod<Scalar>& ds, Index m_x, Index m_y, Index ell,
                                           Timestamp now, Timestamp window) {
  using Matrix = Eigen::MatrixX<Scalar>;
  std::vector<const Snapshot<Scalar>*> live;
  for (const auto& s : ds.snapshots())
    if (s.t + window > now) live.push_back(&s);
  const Index width = std::max<Index>(ds.cols() + static_cast<Index>(live.size()), ell);
  Matrix a = Matrix::Zero(m_x, width);
  Matrix b = Matrix::Zero(m_y, width);
  a.leftCols(ds.cols()) = ds.A();
  b.leftCols(ds.cols()) = ds.B();
  Index c = ds.cols();
  for (const auto* s : live) {
    a.col(c) = s->a;
    b.col(c) = s->b;
    ++c;
  }
  auto shrunk = cs_shrink(a, b, ell);
  return {std::move(shrunk.A), std::move(shrunk.B), 0, now};
}

}  // namespace detail

/// Hierarchical DS-COD: L+1 levels of (main, aux) DS-COD pairs with thresholds
/// eps*N*2^j (sequence windows) or 2^j (time windows).
template <typename Scalar = double>
class HierarchicalDsCod {
 public:
  using Matrix = Eigen::MatrixX<Scalar>;

  struct Level {
    DsCod<Scalar> main;
    DsCod<Scalar> aux;
  };

  HierarchicalDsCod(Index m_x, Index m_y, Timestamp window, Index ell, double eps, double R,
                    WindowMode mode = WindowMode::sequence, DsCodOptions opts = {})
      : m_x_(m_x), m_y_(m_y), window_(window), ell_(ell), eps_(eps), R_(R), mode_(mode) {
    if (m_x < 1 || m_y < 1) throw std::invalid_argument("hDS-COD: dimensions must be positive");
    if (window < 1) throw std::invalid_argument("hDS-COD: window must be at least 1");
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("hDS-COD: eps must lie in (0, 1)");
    if (!(R >= 1.0) || !std::isfinite(R))
      throw std::invalid_argument("hDS-COD: R must be a known bound >= 1");
    if (ell < 1) throw std::invalid_argument("hDS-COD: sketch size must be positive");
    cap_ = static_cast<std::size_t>(sketch_size_for(eps));

    if (mode == WindowMode::sequence) {
      const int L = ceil_log2(R);
      for (int j = 0; j <= L; ++j)
        thresholds_.push_back(static_cast<Scalar>(eps * static_cast<double>(window) * std::ldexp(1.0, j)));
    } else {
      const int L = ceil_log2(eps * static_cast<double>(window) * R);
      for (int j = 0; j <= L; ++j) thresholds_.push_back(static_cast<Scalar>(std::ldexp(1.0, j)));
    }
    levels_.reserve(thresholds_.size());
    for (Scalar theta : thresholds_)
      levels_.push_back({DsCod<Scalar>(m_x, m_y, ell, theta, opts),
                         DsCod<Scalar>(m_x, m_y, ell, theta, opts)});
  }

  void update(const ColumnPair<Scalar>& col) {
    if (col.t <= last_ts_) throw std::invalid_argument("hDS-COD: timestamps must increase");
    for (auto& level : levels_) {
      level.main.expire(col.t, window_, cap_);
      level.aux.expire(col.t, window_, cap_);
      level.main.update(col);
      level.aux.update(col);
      // Dumps from this step may overshoot the cap; trim before anyone looks.
      level.main.expire(col.t, window_, cap_);
      level.aux.expire(col.t, window_, cap_);
      if (restart_due(col.t)) {
        level.main = level.aux;
        level.aux.reset();
      }
    }
    last_ts_ = col.t;
  }

  CorrelationSketch<Scalar> query() const { return query(last_ts_); }

  CorrelationSketch<Scalar> query(Timestamp now) const {
    const int j = query_level(now);
    auto sketch = detail::merge_and_shrink(levels_[j].main, m_x_, m_y_, ell_, now, window_);
    sketch.level_used = j;
    return sketch;
  }

  int query_level(Timestamp now) const {
    if (rule_ == QueryRule::lowest_covering)
      for (int j = 0; j <= top_level(); ++j)
        if (levels_[j].main.covers_window(now, window_)) return j;
    return select_query_level(live_snapshot_counts(now), static_cast<std::size_t>(ell_));
  }

  void set_query_rule(QueryRule rule) { rule_ = rule; }
  QueryRule query_rule() const { return rule_; }

  std::vector<std::size_t> live_snapshot_counts(Timestamp now) const {
    std::vector<std::size_t> counts;
    counts.reserve(levels_.size());
    for (const auto& level : levels_) counts.push_back(level.main.live_snapshots(now, window_));
    return counts;
  }

  /// All residual and snapshot columns across main and aux sketches.
  Index space_cols() const {
    Index total = 0;
    for (const auto& level : levels_) total += level.main.space_cols() + level.aux.space_cols();
    return total;
  }

  const std::vector<Level>& levels() const { return levels_; }
  const std::vector<Scalar>& thresholds() const { return thresholds_; }
  int top_level() const { return static_cast<int>(levels_.size()) - 1; }
  std::size_t snapshot_cap() const { return cap_; }
  Index ell() const { return ell_; }
  Timestamp window() const { return window_; }
  Timestamp last_timestamp() const { return last_ts_; }
  WindowMode mode() const { return mode_; }

 private:
  bool restart_due(Timestamp t) const { return (t - 1) % window_ == 0; }

  Index m_x_, m_y_;
  Timestamp window_;
  Index ell_;
  double eps_;
  double R_;
  WindowMode mode_;
  std::size_t cap_ = 0;
  std::vector<Scalar> thresholds_;
  std::vector<Level> levels_;
  QueryRule rule_ = QueryRule::lowest_covering;
  Timestamp last_ts_ = 0;
};

/// Adaptive DS-COD: one (main, aux) pair whose threshold doubles or halves
/// with the snapshot count, floored at its initial value.
template <typename Scalar = double>
class AdaptiveDsCod {
 public:
  AdaptiveDsCod(Index m_x, Index m_y, Timestamp window, Index ell, double eps,
                WindowMode mode = WindowMode::sequence, DsCodOptions opts = {})
      : m_x_(m_x),
        m_y_(m_y),
        window_(window),
        ell_(ell),
        eps_(eps),
        base_theta_(mode == WindowMode::sequence
                        ? static_cast<Scalar>(eps * static_cast<double>(window))
                        : Scalar(1)),
        main_(m_x, m_y, ell, base_theta_, opts),
        aux_(m_x, m_y, ell, base_theta_, opts) {
    if (window < 1) throw std::invalid_argument("aDS-COD: window must be at least 1");
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("aDS-COD: eps must lie in (0, 1)");
  }

  void update(const ColumnPair<Scalar>& col) {
    if (col.t <= last_ts_) throw std::invalid_argument("aDS-COD: timestamps must increase");
    main_.expire(col.t, window_);
    if ((col.t - 1) % window_ == 0) {
      main_ = aux_;
      aux_.reset();
    }
    main_.update(col);
    aux_.update(col);
    last_ts_ = col.t;

    const auto n = static_cast<double>(main_.snapshots().size());
    if (n >= std::ceil(level_ / eps_ - 1e-9)) {
      set_level(level_ + 1);
    } else if (n <= std::floor((level_ - 1) / eps_ + 1e-9)) {
      set_level(std::max(1, level_ - 1));
    }
  }

  CorrelationSketch<Scalar> query() const { return query(last_ts_); }

  CorrelationSketch<Scalar> query(Timestamp now) const {
    auto sketch = detail::merge_and_shrink(main_, m_x_, m_y_, ell_, now, window_);
    sketch.level_used = level_;
    return sketch;
  }

  int level() const { return level_; }
  Scalar theta() const { return main_.theta(); }
  Scalar base_theta() const { return base_theta_; }
  const DsCod<Scalar>& main() const { return main_; }
  const DsCod<Scalar>& aux() const { return aux_; }
  Index space_cols() const { return main_.space_cols() + aux_.space_cols(); }
  std::size_t snapshot_count() const { return main_.snapshots().size() + aux_.snapshots().size(); }
  Index ell() const { return ell_; }
  Timestamp last_timestamp() const { return last_ts_; }

 private:
  void set_level(int L) {
    level_ = L;
    const Scalar theta = base_theta_ * static_cast<Scalar>(std::ldexp(1.0, L - 1));
    main_.set_threshold(theta);
    aux_.set_threshold(theta);
  }

  Index m_x_, m_y_;
  Timestamp window_;
  Index ell_;
  double eps_;
  Scalar base_theta_;
  DsCod<Scalar> main_;
  DsCod<Scalar> aux_;
  int level_ = 1;
  Timestamp last_ts_ = 0;
};

/// Streaming co-occurring directions over the whole stream: insert into a free
/// column, shrink by the ceil(ell/2)-th singular value when the buffer fills.
/// Guarantees ||X Y^T - A B^T||_2 <= (2/ell) ||X||_F ||Y||_F.
template <typename Scalar = double>
class CoOccurringDirections {
 public:
  using Matrix = Eigen::MatrixX<Scalar>;

  CoOccurringDirections(Index m_x, Index m_y, Index ell)
      : ell_(ell), shrink_to_((ell + 1) / 2), a_(Matrix::Zero(m_x, ell)), b_(Matrix::Zero(m_y, ell)) {
    if (m_x < 1 || m_y < 1) throw std::invalid_argument("COD: dimensions must be positive");
    if (ell < 1) throw std::invalid_argument("COD: sketch size must be positive");
    if (shrink_to_ > std::min(m_x, m_y))
      throw std::invalid_argument("COD: ceil(ell/2) exceeds min(m_x, m_y)");
  }

  template <typename DerivedX, typename DerivedY>
  void update(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    if (x.size() != a_.rows() || y.size() != b_.rows())
      throw std::invalid_argument("COD: column dimension mismatch");
    if (x.norm() * y.norm() == Scalar(0)) return;
    a_.col(used_) = x;
    b_.col(used_) = y;
    if (++used_ < ell_) return;
    auto s = detail::shrink_aligned(a_, b_, shrink_to_);
    used_ = s.sigma.size();
    a_.setZero();
    b_.setZero();
    a_.leftCols(used_) = s.A;
    b_.leftCols(used_) = s.B;
  }

  void update(const ColumnPair<Scalar>& col) { update(col.x, col.y); }

  SketchPair<Scalar> sketch() const { return {a_, b_}; }
  Index ell() const { return ell_; }
  Index used_cols() const { return used_; }

 private:
  Index ell_;
  Index shrink_to_;
  Index used_ = 0;
  Matrix a_, b_;
};

/// COD over the columns of X and Y in order.
template <typename DerivedX, typename DerivedY>
SketchPair<typename DerivedX::Scalar> cod_stream(const Eigen::MatrixBase<DerivedX>& X,
                                                 const Eigen::MatrixBase<DerivedY>& Y, Index ell) {
  if (X.cols() != Y.cols()) throw std::invalid_argument("cod_stream: column count mismatch");
  CoOccurringDirections<typename DerivedX::Scalar> cod(X.rows(), Y.rows(), ell);
  for (Index i = 0; i < X.cols(); ++i) cod.update(X.col(i), Y.col(i));
  return cod.sketch();
}

/// Reruns COD over an explicit window of column pairs.
template <typename Scalar>
SketchPair<Scalar> naive_window_cod(const std::deque<ColumnPair<Scalar>>& window, Index m_x,
                                    Index m_y, Index ell) {
  CoOccurringDirections<Scalar> cod(m_x, m_y, ell);
  for (const auto& p : window) cod.update(p.x, p.y);
  return cod.sketch();
}

}  // namespace slidewin
