#pragma once

// Benchmark harness: runs one algorithm over a stream and samples queries against the exact oracle.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slidewin/stream_io.hpp"
#include "slidewin/types.hpp"

namespace slidewin {

enum class Algorithm { hds, ads, cod, naive };

Algorithm parse_algorithm(const std::string& name);
const char* algorithm_name(Algorithm a);
WindowMode parse_mode(const std::string& name);

/// Raised for conflicting or incomplete run settings.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  Algorithm algorithm = Algorithm::hds;
  std::optional<Index> ell;
  std::optional<double> eps;
  std::optional<Timestamp> window;  // falls back to the N of the generator spec
  WindowMode mode = WindowMode::sequence;
  std::optional<Timestamp> query_every;
  std::optional<StreamConfig> gen;
  std::optional<std::filesystem::path> input;
  std::optional<double> R;  // hds with file input needs it
  std::optional<std::uint64_t> seed;
  bool timing = false;
  std::string label;  // overrides the algorithm column when non-empty
};

/// Settings after defaults and cross-checks.
struct ResolvedRun {
  Algorithm algorithm;
  Index ell;
  double eps;
  Timestamp window;
  WindowMode mode;
  Timestamp query_every;
  double R;
  bool timing;
  std::string label;
};

struct MetricsRow {
  std::string step;
  std::string algorithm;
  int level_used = 0;
  Index sketch_cols = 0;
  Index total_space_cols = 0;
  double corr_err = 0;
  double update_time_us = 0;
};

struct RunResult {
  ResolvedRun config;
  std::vector<MetricsRow> samples;
  double mean_err = 0;
  double max_err = 0;
  Index peak_space_cols = 0;

  /// Error ceiling checked by --assert-bound.
  double bound() const;
  bool within_bound() const { return max_err <= bound(); }
  /// Sample rows followed by the mean and max rows.
  std::vector<MetricsRow> rows() const;
};

inline constexpr const char* kCsvHeader =
    "step,algorithm,level_used,sketch_cols,total_space_cols,corr_err,update_time_us";

/// Parses `mx=40,my=60,n=5000,N=1000,R=64[,lambda=2][,regimes=0:1/2500:0.25][,seed=7]`.
StreamConfig parse_gen_spec(const std::string& spec);

/// Stream defined by the config; the config seed wins over the generator's.
std::vector<ColumnPair<double>> materialize_stream(const RunConfig& cfg, StreamHeader* header = nullptr);

ResolvedRun resolve(const RunConfig& cfg, const StreamHeader& header);

RunResult run(const RunConfig& cfg);
RunResult run(const RunConfig& cfg, const std::vector<ColumnPair<double>>& stream,
              const StreamHeader& header);

/// Runs every config on one shared stream; configs naming different streams are rejected.
std::vector<RunResult> compare(const std::vector<RunConfig>& cfgs);

void write_csv(std::ostream& os, const std::vector<RunResult>& results);
std::string to_csv(const std::vector<RunResult>& results);

}  // namespace slidewin
