#include <gtest/gtest.h>

#include <array>

#include "slidewin/oracle.hpp"
#include "slidewin/stream_io.hpp"
#include "slidewin/window.hpp"
#include "test_util.hpp"

using namespace slidewin;
using slidewin::testing::gaussian;
using slidewin::testing::sigma_max;

namespace {

ColumnPair<double> pair_at(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Timestamp t) { return {x, y, t}; }

StreamConfig small_stream(std::uint64_t seed, Timestamp n = 1500, double R = 16) {
  StreamConfig c;
  c.m_x = 10;
  c.m_y = 12;
  c.n = n;
  c.window = 300;
  c.R = R;
  c.seed = seed;
  c.regimes = StreamConfig::two_regime(n);
  return c;
}

}  // namespace

TEST(HdsInit, LevelsFromDatasetRow) {
  HierarchicalDsCod<double> h(4, 4, 50000, 2, 0.1, 65.0);
  ASSERT_EQ(h.top_level(), 7);
  for (int j = 0; j <= 7; ++j) EXPECT_DOUBLE_EQ(h.thresholds()[j], 5000.0 * std::ldexp(1.0, j));
  EXPECT_EQ(h.snapshot_cap(), 10u);
}

TEST(HdsInit, SingleLevelWhenRIsOne) {
  HierarchicalDsCod<double> h(4, 4, 100, 2, 0.25, 1.0);
  ASSERT_EQ(h.top_level(), 0);
  EXPECT_DOUBLE_EQ(h.thresholds()[0], 25.0);
}

TEST(HdsInit, TimeModeThresholds) {
  HierarchicalDsCod<double> h(4, 4, 100, 2, 0.5, 4.0, WindowMode::time);
  ASSERT_EQ(h.top_level(), 8);  // ceil(log2(200))
  for (int j = 0; j <= 8; ++j) EXPECT_DOUBLE_EQ(h.thresholds()[j], std::ldexp(1.0, j));
}

TEST(HdsInit, RejectsBadRanges) {
  EXPECT_THROW(HierarchicalDsCod<double>(4, 4, 100, 2, 0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(HierarchicalDsCod<double>(4, 4, 0, 2, 0.1, 4.0), std::invalid_argument);
  EXPECT_THROW(HierarchicalDsCod<double>(4, 4, 100, 2, 1.5, 4.0), std::invalid_argument);
  EXPECT_THROW(HierarchicalDsCod<double>(4, 4, 100, 0, 0.1, 4.0), std::invalid_argument);
}

TEST(Helpers, CeilLog2AndSketchSize) {
  EXPECT_EQ(ceil_log2(1.0), 0);
  EXPECT_EQ(ceil_log2(2.0), 1);
  EXPECT_EQ(ceil_log2(65.0), 7);
  EXPECT_EQ(ceil_log2(64.0), 6);
  EXPECT_EQ(sketch_size_for(0.1), 10);
  EXPECT_EQ(sketch_size_for(0.2), 5);
  EXPECT_EQ(sketch_size_for(0.3), 4);
}

TEST(QueryLevel, OnlyCandidate) {
  const std::array<std::size_t, 3> counts{20, 0, 0};
  EXPECT_EQ(select_query_level(counts, 10), 0);
}

TEST(QueryLevel, HighestQualifying) {
  const std::array<std::size_t, 4> counts{40, 20, 9, 1};
  EXPECT_EQ(select_query_level(counts, 10), 1);
}

TEST(QueryLevel, FallbackToLargestCountLowerOnTie) {
  const std::array<std::size_t, 4> counts{3, 7, 7, 2};
  EXPECT_EQ(select_query_level(counts, 10), 1);
  const std::array<std::size_t, 2> empty{0, 0};
  EXPECT_EQ(select_query_level(empty, 10), 0);
}

// Tiny norms keep every level below its threshold, so the buffers hold raw columns.
TEST(HdsUpdate, RestartSwapsAfterUpdate) {
  const Timestamp N = 5;
  HierarchicalDsCod<double> h(8, 8, N, 4, 0.5, 1.0);
  std::vector<Eigen::VectorXd> xs;
  for (Timestamp t = 1; t <= 2 * N + 1; ++t) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(8);
    x(t % 8) = 1e-3 * static_cast<double>(t);
    xs.push_back(x);
    h.update(pair_at(x, x, t));
    const auto& lv = h.levels()[0];
    if (t <= N) {
      // Cold start: aux restarted at t = 1, so it lags main by column 1.
      EXPECT_EQ(lv.main.cols(), t) << t;
      EXPECT_EQ(lv.aux.cols(), t - 1) << t;
    }
    if (t == N + 1) {
      // main holds columns 2..N+1, aux is empty.
      ASSERT_EQ(lv.main.cols(), N);
      for (Index c = 0; c < N; ++c) EXPECT_TRUE(lv.main.A().col(c).isApprox(xs[c + 1])) << c;
      EXPECT_EQ(lv.aux.cols(), 0);
    }
  }
  // Second restart at 2N+1: columns N+2..2N+1.
  const auto& lv = h.levels()[0];
  ASSERT_EQ(lv.main.cols(), N);
  for (Index c = 0; c < N; ++c) EXPECT_TRUE(lv.main.A().col(c).isApprox(xs[N + 1 + c]));
}

TEST(HdsUpdate, CountCapOnEveryLevel) {
  const auto cfg = small_stream(22);
  HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, 5, 0.2, cfg.R);
  SyntheticStream s(cfg);
  bool any_full = false;
  while (!s.done()) {
    h.update(s.next());
    for (const auto& level : h.levels()) {
      ASSERT_LE(level.main.snapshots().size(), h.snapshot_cap());
      ASSERT_LE(level.aux.snapshots().size(), h.snapshot_cap());
      any_full |= level.main.snapshots().size() == h.snapshot_cap();
    }
  }
  EXPECT_TRUE(any_full);
}

TEST(HdsQuery, EmptyStateGivesZeroSketch) {
  HierarchicalDsCod<double> h(4, 3, 10, 2, 0.5, 2.0);
  const auto sk = h.query(0);
  EXPECT_EQ(sk.A.cols(), 2);
  EXPECT_EQ(sk.A.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(sk.B.cwiseAbs().maxCoeff(), 0.0);
}

TEST(HdsQuery, BoundAndWidthOnSyntheticStream) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto cfg = small_stream(seed);
    const double eps = 0.2;
    HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, sketch_size_for(eps), eps, cfg.R);
    WindowOracle<double> oracle(cfg.m_x, cfg.m_y, cfg.window);
    SyntheticStream s(cfg);
    while (!s.done()) {
      const auto p = s.next();
      h.update(p);
      oracle.push(p);
      if (p.t % 50 != 0) continue;
      const auto sk = h.query(p.t);
      ASSERT_LE(sk.A.cols(), 5);
      EXPECT_LE(oracle.corr_err(sk.A, sk.B).corr_err, 8 * eps) << "seed " << seed << " t " << p.t;
    }
  }
}

TEST(HdsQuery, RightAfterRestart) {
  const auto cfg = small_stream(4, 1000);
  const double eps = 0.2;
  HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, 5, eps, cfg.R);
  WindowOracle<double> oracle(cfg.m_x, cfg.m_y, cfg.window);
  SyntheticStream s(cfg);
  while (!s.done()) {
    const auto p = s.next();
    h.update(p);
    oracle.push(p);
    if (p.t > 1 && (p.t - 1) % cfg.window == 0) {
      const auto sk = h.query(p.t);
      EXPECT_LE(oracle.corr_err(sk.A, sk.B).corr_err, 8 * eps) << p.t;
    }
  }
}

TEST(HdsQuery, PicksLowestCoveringLevel) {
  const auto cfg = small_stream(7);
  HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, 5, 0.2, cfg.R);
  SyntheticStream s(cfg);
  int truncated_seen = 0;
  while (!s.done()) {
    const auto p = s.next();
    h.update(p);
    if (p.t % 100 != 0) continue;
    const int j = h.query_level(p.t);
    for (int i = 0; i < j; ++i) EXPECT_FALSE(h.levels()[i].main.covers_window(p.t, cfg.window));
    EXPECT_TRUE(h.levels()[j].main.covers_window(p.t, cfg.window));
    truncated_seen += j > 0;
  }
  EXPECT_GT(truncated_seen, 0);
}

TEST(HdsQuery, CountRuleStillAvailable) {
  const auto cfg = small_stream(8, 900);
  HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, 5, 0.2, cfg.R);
  h.set_query_rule(QueryRule::highest_count);
  SyntheticStream s(cfg);
  while (!s.done()) h.update(s.next());
  const auto counts = h.live_snapshot_counts(h.last_timestamp());
  EXPECT_EQ(h.query_level(h.last_timestamp()), select_query_level(counts, 5));
  EXPECT_EQ(h.query().level_used, select_query_level(counts, 5));
}

TEST(Ads, LevelRisesAtTenSnapshots) {
  AdaptiveDsCod<double> a(16, 16, 1000, 10, 0.1);
  EXPECT_EQ(a.level(), 1);
  EXPECT_DOUBLE_EQ(a.theta(), 100.0);
  const double s = std::sqrt(150.0);
  for (Index i = 0; i < 9; ++i) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
    x(i) = s;
    a.update({x, x, i + 1});
  }
  EXPECT_EQ(a.level(), 1);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(16);
  x(9) = s;
  a.update({x, x, 10});
  EXPECT_EQ(a.main().snapshots().size(), 10u);
  EXPECT_EQ(a.level(), 2);
  EXPECT_DOUBLE_EQ(a.theta(), 200.0);
  EXPECT_DOUBLE_EQ(a.aux().theta(), 200.0);
}

TEST(Ads, FloorHolds) {
  AdaptiveDsCod<double> a(4, 4, 100, 2, 0.5);
  a.update({Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4), 1});
  EXPECT_EQ(a.level(), 1);
  EXPECT_DOUBLE_EQ(a.theta(), 50.0);
  EXPECT_DOUBLE_EQ(a.base_theta(), 50.0);
}

TEST(Ads, RestartSwapsBeforeUpdate) {
  const Timestamp N = 5;
  AdaptiveDsCod<double> a(8, 8, N, 4, 0.5);
  std::vector<Eigen::VectorXd> xs;
  for (Timestamp t = 1; t <= N + 1; ++t) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(8);
    x(t % 8) = 1e-3 * static_cast<double>(t);
    xs.push_back(x);
    a.update({x, x, t});
  }
  // main holds columns 1..N+1, aux only the last one.
  ASSERT_EQ(a.main().cols(), N + 1);
  for (Index c = 0; c <= N; ++c) EXPECT_TRUE(a.main().A().col(c).isApprox(xs[c]));
  ASSERT_EQ(a.aux().cols(), 1);
  EXPECT_TRUE(a.aux().A().col(0).isApprox(xs[N]));
}

TEST(Ads, ThresholdFollowsRegimeDrop) {
  StreamConfig cfg;
  cfg.m_x = 10;
  cfg.m_y = 12;
  cfg.n = 8000;
  cfg.window = 1000;
  cfg.R = 64;
  cfg.seed = 5;
  cfg.regimes = {{0, 1.0}, {4000, 0.25}};
  AdaptiveDsCod<double> a(cfg.m_x, cfg.m_y, cfg.window, 10, 0.1);
  SyntheticStream s(cfg);
  double theta_before = 0;
  std::size_t late_snapshots = 0;
  while (!s.done()) {
    const auto p = s.next();
    a.update(p);
    if (p.t == 4000) theta_before = a.theta();
    if (p.t > 7000) late_snapshots = std::max(late_snapshots, a.main().snapshots().size());
  }
  // The count bands widen linearly in L, so a 4x drop moves the level by about one step.
  EXPECT_LE(a.theta(), theta_before / 2.0);
  EXPECT_GE(a.theta(), a.base_theta());
  EXPECT_GT(late_snapshots, 0u);
}

TEST(Ads, SpaceAndBound) {
  const auto cfg = small_stream(6);
  const double eps = 0.2;
  AdaptiveDsCod<double> a(cfg.m_x, cfg.m_y, cfg.window, 5, eps);
  WindowOracle<double> oracle(cfg.m_x, cfg.m_y, cfg.window);
  SyntheticStream s(cfg);
  const std::size_t cap = 5 * static_cast<std::size_t>(ceil_log2(cfg.R) + 1);
  while (!s.done()) {
    const auto p = s.next();
    a.update(p);
    oracle.push(p);
    ASSERT_LE(a.main().snapshots().size(), cap);
    ASSERT_LE(a.aux().snapshots().size(), cap);
    if (p.t % 50 == 0) {
      const auto sk = a.query(p.t);
      ASSERT_LE(sk.A.cols(), 5);
      EXPECT_LE(oracle.corr_err(sk.A, sk.B).corr_err, 8 * eps);
    }
  }
}

TEST(Cod, OrthogonalPairsAreExact) {
  const Index ell = 8;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(10, ell / 2), Y = Eigen::MatrixXd::Zero(10, ell / 2);
  for (Index i = 0; i < ell / 2; ++i) {
    X(i, i) = 1.0 + static_cast<double>(i);
    Y(i, i) = 2.0;
  }
  const auto sk = cod_stream(X, Y, ell);
  EXPECT_LE((sk.A * sk.B.transpose() - X * Y.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cod, RandomStreamBound) {
  std::mt19937_64 gen(23);
  const Eigen::MatrixXd X = gaussian(40, 2000, gen), Y = gaussian(60, 2000, gen);
  const Index ell = 20;
  const auto sk = cod_stream(X, Y, ell);
  EXPECT_LE(sigma_max(X * Y.transpose() - sk.A * sk.B.transpose()), 2.0 / ell * X.norm() * Y.norm());
}

TEST(Cod, LowRankIsRecovered) {
  std::mt19937_64 gen(24);
  const Eigen::MatrixXd Ux = gaussian(6, 2, gen), Uy = gaussian(7, 2, gen);
  const Eigen::MatrixXd C = gaussian(2, 300, gen);
  const Eigen::MatrixXd X = Ux * C, Y = Uy * C;
  const auto sk = cod_stream(X, Y, 6);
  const Eigen::MatrixXd P = X * Y.transpose();
  EXPECT_LE(sigma_max(P - sk.A * sk.B.transpose()), 1e-8 * sigma_max(P));
}

TEST(Cod, RejectsOversizedSketch) {
  EXPECT_THROW(CoOccurringDirections<double>(3, 3, 8), std::invalid_argument);
  EXPECT_NO_THROW(CoOccurringDirections<double>(3, 3, 6));
}

TEST(NaiveWindow, FullWindowMatchesCodStream) {
  std::mt19937_64 gen(25);
  const Eigen::MatrixXd X = gaussian(8, 50, gen), Y = gaussian(9, 50, gen);
  std::deque<ColumnPair<double>> w;
  for (Index i = 0; i < 50; ++i) w.push_back({X.col(i), Y.col(i), i + 1});
  const auto a = naive_window_cod(w, 8, 9, 6);
  const auto b = cod_stream(X, Y, 6);
  EXPECT_TRUE(a.A.isApprox(b.A));
  EXPECT_TRUE(a.B.isApprox(b.B));
}

TEST(NaiveWindow, BoundOnEveryWindow) {
  const auto cfg = small_stream(26, 600);
  WindowOracle<double> oracle(cfg.m_x, cfg.m_y, 100);
  SyntheticStream s(cfg);
  while (!s.done()) {
    oracle.push(s.next());
    if (oracle.now() % 25 != 0) continue;
    const auto sk = naive_window_cod(oracle.pairs(), cfg.m_x, cfg.m_y, 10);
    EXPECT_LE(oracle.corr_err(sk.A, sk.B).corr_err, 2.0 / 10);
  }
}

TEST(NaiveWindow, AllZeroWindow) {
  WindowOracle<double> oracle(3, 4, 5);
  for (Timestamp t = 1; t <= 5; ++t) oracle.push({Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), t});
  const auto sk = naive_window_cod(oracle.pairs(), 3, 4, 2);
  EXPECT_EQ(sk.A.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(oracle.corr_err(sk.A, sk.B).corr_err, 0.0);
}

TEST(Monotonicity, MeanErrorShrinksWithSketchSize) {
  StreamConfig cfg;
  cfg.m_x = 40;
  cfg.m_y = 60;
  cfg.n = 5000;
  cfg.window = 1000;
  cfg.R = 16;
  cfg.seed = 27;
  cfg.regimes = StreamConfig::two_regime(cfg.n);
  const auto stream = gen_synthetic(cfg);
  double prev = std::numeric_limits<double>::infinity();
  for (Index ell : {5, 10, 20, 40}) {
    HierarchicalDsCod<double> h(cfg.m_x, cfg.m_y, cfg.window, ell, 1.0 / static_cast<double>(ell), cfg.R);
    WindowOracle<double> oracle(cfg.m_x, cfg.m_y, cfg.window);
    double sum = 0;
    int samples = 0;
    for (const auto& p : stream) {
      h.update(p);
      oracle.push(p);
      if (p.t % 200 != 0) continue;
      const auto sk = h.query(p.t);
      sum += oracle.corr_err(sk.A, sk.B).corr_err;
      ++samples;
    }
    ASSERT_GE(samples, 20);
    const double mean = sum / samples;
    EXPECT_LE(mean, prev * 1.10) << "ell " << ell;
    prev = mean;
  }
}
