#include "slidewin/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ostream>
#include <sstream>

#include "slidewin/oracle.hpp"
#include "slidewin/window.hpp"

namespace slidewin {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "hds") return Algorithm::hds;
  if (name == "ads") return Algorithm::ads;
  if (name == "cod") return Algorithm::cod;
  if (name == "naive") return Algorithm::naive;
  throw ConfigError("unknown algorithm '" + name + "' (expected hds, ads, cod or naive)");
}

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::hds: return "hds";
    case Algorithm::ads: return "ads";
    case Algorithm::cod: return "cod";
    case Algorithm::naive: return "naive";
  }
  return "?";
}

WindowMode parse_mode(const std::string& name) {
  if (name == "sequence" || name == "seq") return WindowMode::sequence;
  if (name == "time") return WindowMode::time;
  throw ConfigError("unknown window mode '" + name + "' (expected sequence or time)");
}

namespace {

template <typename T>
T parse_value(std::string_view s, const std::string& key) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError("bad value '" + std::string(s) + "' for gen key '" + key + "'");
  return v;
}

std::vector<Regime> parse_regimes(std::string_view s) {
  std::vector<Regime> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto slash = s.find('/', pos);
    const auto item = s.substr(pos, slash == std::string_view::npos ? slash : slash - pos);
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw ConfigError("regime '" + std::string(item) + "' needs start:scale");
    Regime r;
    r.start_step = parse_value<long long>(item.substr(0, colon), "regimes");
    r.scale = parse_value<double>(item.substr(colon + 1), "regimes");
    out.push_back(r);
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  return out;
}

bool same_stream(const StreamConfig& a, const StreamConfig& b) {
  if (a.m_x != b.m_x || a.m_y != b.m_y || a.n != b.n || a.R != b.R || a.seed != b.seed ||
      a.arrival != b.arrival || a.regimes.size() != b.regimes.size())
    return false;
  if (a.arrival == Arrival::poisson && a.lambda != b.lambda) return false;
  for (std::size_t i = 0; i < a.regimes.size(); ++i)
    if (a.regimes[i].start_step != b.regimes[i].start_step || a.regimes[i].scale != b.regimes[i].scale)
      return false;
  return true;
}

StreamConfig effective_gen(const RunConfig& cfg) {
  StreamConfig g = *cfg.gen;
  if (cfg.seed) g.seed = *cfg.seed;
  // Time windows are only interesting with gaps.
  if (cfg.mode == WindowMode::time && g.arrival == Arrival::unit) g.arrival = Arrival::poisson;
  return g;
}

using Clock = std::chrono::steady_clock;

}  // namespace

StreamConfig parse_gen_spec(const std::string& spec) {
  StreamConfig g;
  bool have_mx = false, have_my = false, have_n = false;
  std::string_view s(spec);
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto comma = s.find(',', pos);
    if (comma == std::string_view::npos) comma = s.size();
    const auto item = s.substr(pos, comma - pos);
    pos = comma + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw ConfigError("gen item '" + std::string(item) + "' needs key=value");
    const std::string key(item.substr(0, eq));
    const auto val = item.substr(eq + 1);
    if (key == "mx") {
      g.m_x = parse_value<long long>(val, key);
      have_mx = true;
    } else if (key == "my") {
      g.m_y = parse_value<long long>(val, key);
      have_my = true;
    } else if (key == "n") {
      g.n = parse_value<long long>(val, key);
      have_n = true;
    } else if (key == "N") {
      g.window = parse_value<long long>(val, key);
    } else if (key == "R") {
      g.R = parse_value<double>(val, key);
    } else if (key == "lambda") {
      g.lambda = parse_value<double>(val, key);
      g.arrival = Arrival::poisson;
    } else if (key == "regimes") {
      g.regimes = parse_regimes(val);
    } else if (key == "seed") {
      g.seed = parse_value<unsigned long long>(val, key);
    } else {
      throw ConfigError("unknown gen key '" + key + "'");
    }
  }
  if (!have_mx || !have_my || !have_n) throw ConfigError("gen spec needs mx, my and n");
  try {
    g.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return g;
}

std::vector<ColumnPair<double>> materialize_stream(const RunConfig& cfg, StreamHeader* header) {
  if (cfg.gen.has_value() == cfg.input.has_value())
    throw ConfigError("give exactly one stream source (--gen or --input)");
  if (cfg.input) return load_stream(*cfg.input, header);
  const StreamConfig g = effective_gen(cfg);
  if (header) *header = StreamHeader{g.m_x, g.m_y, g.n};
  return gen_synthetic(g);
}

ResolvedRun resolve(const RunConfig& cfg, const StreamHeader& header) {
  ResolvedRun r;
  r.algorithm = cfg.algorithm;
  r.mode = cfg.mode;
  r.timing = cfg.timing;
  r.label = cfg.label.empty() ? algorithm_name(cfg.algorithm) : cfg.label;

  if (cfg.ell.has_value() == cfg.eps.has_value()) throw ConfigError("give exactly one of --ell and --eps");
  if (cfg.eps) {
    if (!(*cfg.eps > 0.0 && *cfg.eps < 1.0)) throw ConfigError("--eps must lie in (0, 1)");
    r.eps = *cfg.eps;
    r.ell = sketch_size_for(r.eps);
  } else {
    if (*cfg.ell < 1) throw ConfigError("--ell must be positive");
    r.ell = *cfg.ell;
    r.eps = 1.0 / static_cast<double>(r.ell);
    if ((r.algorithm == Algorithm::hds || r.algorithm == Algorithm::ads) && r.ell < 2)
      throw ConfigError("--ell must be at least 2 for windowed DS-COD");
  }
  const Index m_min = std::min(header.m_x, header.m_y);
  if (r.algorithm == Algorithm::cod || r.algorithm == Algorithm::naive) {
    if ((r.ell + 1) / 2 > m_min) throw ConfigError("COD needs ceil(ell/2) <= min(m_x, m_y)");
  } else if (r.ell > m_min) {
    throw ConfigError("sketch size exceeds min(m_x, m_y)");
  }

  if (cfg.window)
    r.window = *cfg.window;
  else if (cfg.gen && cfg.gen->window > 0)
    r.window = cfg.gen->window;
  else if (r.algorithm == Algorithm::cod)
    r.window = std::max<Timestamp>(header.n, 1);
  else
    throw ConfigError("window size N is required (--window or N= in --gen)");
  if (r.window < 1) throw ConfigError("window size must be positive");

  if (cfg.query_every) {
    if (*cfg.query_every < 1) throw ConfigError("--query-every must be positive");
    r.query_every = *cfg.query_every;
  } else {
    r.query_every = header.n < 5000 ? 200 : 1000;
  }

  if (cfg.R)
    r.R = *cfg.R;
  else if (cfg.gen)
    r.R = cfg.gen->R;
  else if (r.algorithm == Algorithm::hds)
    throw ConfigError("hds on a stream file needs --R");
  else
    r.R = 1.0;
  if (!(r.R >= 1.0)) throw ConfigError("R must be >= 1");
  return r;
}

double RunResult::bound() const {
  switch (config.algorithm) {
    case Algorithm::hds:
    case Algorithm::ads: return 8.0 * config.eps;
    case Algorithm::cod:
    case Algorithm::naive: return 2.0 / static_cast<double>(config.ell);
  }
  return 0.0;
}

std::vector<MetricsRow> RunResult::rows() const {
  std::vector<MetricsRow> out = samples;
  MetricsRow mean, max;
  mean.step = "mean";
  max.step = "max";
  mean.algorithm = max.algorithm = config.label;
  mean.sketch_cols = max.sketch_cols = config.ell;
  double space_sum = 0, level_sum = 0, time_sum = 0;
  for (const auto& s : samples) {
    space_sum += static_cast<double>(s.total_space_cols);
    level_sum += s.level_used;
    time_sum += s.update_time_us;
    max.level_used = std::max(max.level_used, s.level_used);
    max.update_time_us = std::max(max.update_time_us, s.update_time_us);
  }
  if (!samples.empty()) {
    const double k = static_cast<double>(samples.size());
    mean.total_space_cols = static_cast<Index>(std::llround(space_sum / k));
    mean.level_used = static_cast<int>(std::lround(level_sum / k));
    mean.update_time_us = time_sum / k;
  }
  mean.corr_err = mean_err;
  max.corr_err = max_err;
  max.total_space_cols = peak_space_cols;
  out.push_back(mean);
  out.push_back(max);
  return out;
}

RunResult run(const RunConfig& cfg) {
  StreamHeader header;
  const auto stream = materialize_stream(cfg, &header);
  return run(cfg, stream, header);
}

RunResult run(const RunConfig& cfg, const std::vector<ColumnPair<double>>& stream,
              const StreamHeader& header) {
  RunResult res;
  res.config = resolve(cfg, header);
  const ResolvedRun& rc = res.config;
  const Index mx = header.m_x, my = header.m_y;

  std::optional<HierarchicalDsCod<double>> hds;
  std::optional<AdaptiveDsCod<double>> ads;
  std::optional<CoOccurringDirections<double>> cod;
  if (rc.algorithm == Algorithm::hds) hds.emplace(mx, my, rc.window, rc.ell, rc.eps, rc.R, rc.mode);
  if (rc.algorithm == Algorithm::ads) ads.emplace(mx, my, rc.window, rc.ell, rc.eps, rc.mode);
  if (rc.algorithm == Algorithm::cod) cod.emplace(mx, my, rc.ell);

  WindowOracle<double> oracle(mx, my, rc.window);
  Eigen::MatrixXd prefix;
  double prefix_sx = 0, prefix_sy = 0;
  if (cod) prefix = Eigen::MatrixXd::Zero(mx, my);

  double elapsed_us = 0;
  Timestamp steps_since_row = 0;
  double err_sum = 0;

  for (const auto& p : stream) {
    if (p.x.size() != mx || p.y.size() != my) throw std::invalid_argument("stream column dimension mismatch");
    Clock::time_point start;
    if (rc.timing) start = Clock::now();
    if (hds) hds->update(p);
    if (ads) ads->update(p);
    if (cod) cod->update(p);
    if (rc.algorithm == Algorithm::naive) oracle.push(p);
    if (rc.timing)
      elapsed_us += std::chrono::duration<double, std::micro>(Clock::now() - start).count();
    ++steps_since_row;

    if (cod) {
      prefix.noalias() += p.x * p.y.transpose();
      prefix_sx += p.x.squaredNorm();
      prefix_sy += p.y.squaredNorm();
    } else if (rc.algorithm != Algorithm::naive) {
      oracle.push(p);
    }

    if (p.t % rc.query_every != 0) continue;

    MetricsRow row;
    row.step = std::to_string(p.t);
    row.algorithm = rc.label;
    Index space = 0;
    if (hds) {
      const auto sk = hds->query(p.t);
      row.level_used = sk.level_used;
      row.sketch_cols = sk.A.cols();
      row.corr_err = oracle.corr_err(sk.A, sk.B).corr_err;
      space = hds->space_cols();
    } else if (ads) {
      const auto sk = ads->query(p.t);
      row.level_used = ads->level();
      row.sketch_cols = sk.A.cols();
      row.corr_err = oracle.corr_err(sk.A, sk.B).corr_err;
      space = ads->space_cols();
    } else if (cod) {
      const auto sk = cod->sketch();
      row.sketch_cols = sk.A.cols();
      row.corr_err = WindowOracle<double>::correlation_error(prefix - sk.A * sk.B.transpose(),
                                                             std::sqrt(prefix_sx), std::sqrt(prefix_sy), p.t)
                         .corr_err;
      space = rc.ell;
    } else {
      const auto sk = naive_window_cod(oracle.pairs(), mx, my, rc.ell);
      row.sketch_cols = sk.A.cols();
      row.corr_err = oracle.corr_err(sk.A, sk.B).corr_err;
      space = static_cast<Index>(oracle.nonzero_pairs()) + rc.ell;
    }
    // The returned sketch is itself held in memory.
    row.total_space_cols = std::max(space, row.sketch_cols);
    if (rc.timing && steps_since_row > 0) row.update_time_us = elapsed_us / static_cast<double>(steps_since_row);
    elapsed_us = 0;
    steps_since_row = 0;

    err_sum += row.corr_err;
    res.max_err = std::max(res.max_err, row.corr_err);
    res.peak_space_cols = std::max(res.peak_space_cols, row.total_space_cols);
    res.samples.push_back(std::move(row));
  }
  if (!res.samples.empty()) res.mean_err = err_sum / static_cast<double>(res.samples.size());
  return res;
}

std::vector<RunResult> compare(const std::vector<RunConfig>& cfgs) {
  if (cfgs.empty()) throw ConfigError("compare needs at least one run");
  const RunConfig& first = cfgs.front();
  if (first.gen.has_value() == first.input.has_value())
    throw ConfigError("give exactly one stream source (--gen or --input)");
  for (const auto& c : cfgs) {
    if (c.gen.has_value() != first.gen.has_value() || c.input.has_value() != first.input.has_value())
      throw ConfigError("compare: runs use different stream sources");
    if (c.gen && !same_stream(effective_gen(c), effective_gen(first)))
      throw ConfigError("compare: runs use different generator settings");
    if (c.input && *c.input != *first.input) throw ConfigError("compare: runs read different stream files");
  }
  StreamHeader header;
  const auto stream = materialize_stream(first, &header);
  std::vector<RunResult> out;
  out.reserve(cfgs.size());
  for (const auto& c : cfgs) out.push_back(run(c, stream, header));
  return out;
}

void write_csv(std::ostream& os, const std::vector<RunResult>& results) {
  os << kCsvHeader << '\n';
  for (const auto& r : results)
    for (const auto& row : r.rows())
      os << row.step << ',' << row.algorithm << ',' << row.level_used << ',' << row.sketch_cols << ','
         << row.total_space_cols << ',' << format_double(row.corr_err) << ','
         << format_double(row.update_time_us) << '\n';
}

std::string to_csv(const std::vector<RunResult>& results) {
  std::ostringstream os;
  write_csv(os, results);
  return os.str();
}

}  // namespace slidewin
