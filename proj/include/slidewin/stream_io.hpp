#pragma once

// Synthetic column-pair streams and the cpsv1 text format.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "slidewin/types.hpp"

namespace slidewin {

/// From timestamp `start_step + 1` on, norm products are drawn from [1, scale * R].
struct Regime {
  Timestamp start_step = 0;
  double scale = 1.0;
};

enum class Arrival { unit, poisson };

struct StreamConfig {
  Index m_x = 0;
  Index m_y = 0;
  Timestamp n = 0;       // number of timestamps, zero pairs included
  Timestamp window = 0;  // N; carried for the harness, not used by the generator
  double R = 1.0;
  std::uint64_t seed = 0;
  std::vector<Regime> regimes;  // empty means a single regime at scale 1
  Arrival arrival = Arrival::unit;
  double lambda = 2.0;  // mean number of empty instants after each arrival (poisson)

  void validate() const;
  /// Default schedule used by the acceptance runs: full range, then a quarter of it.
  static std::vector<Regime> two_regime(Timestamp n) { return {{0, 1.0}, {n / 2, 0.25}}; }
};

/// Stream file header.
struct StreamHeader {
  Index m_x = 0;
  Index m_y = 0;
  Timestamp n = 0;
};

/// Deterministic random source: std::mt19937_64 seeded through splitmix64,
/// with a fixed 53-bit mapping to doubles so streams match across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  double uniform();  // [0, 1)
  /// Knuth's multiplication method; fine for the small rates used here.
  std::int64_t poisson(double lambda);
  static std::uint64_t splitmix64(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
};

/// Lazily generated synthetic stream.
///
/// Each data pair has i.i.d. uniform(0,1) entries, rescaled so that ||x|| ||y||
/// equals a target drawn uniformly from [1, max(1, scale * R)] for the active
/// regime. With poisson arrival every data pair is followed by Poisson(lambda)
/// explicit zero pairs.
class SyntheticStream {
 public:
  explicit SyntheticStream(StreamConfig cfg);
  bool done() const { return t_ >= cfg_.n; }
  ColumnPair<double> next();
  const StreamConfig& config() const { return cfg_; }

 private:
  double regime_peak(Timestamp t) const;

  StreamConfig cfg_;
  Rng rng_;
  Timestamp t_ = 0;
  std::int64_t pending_zeros_ = 0;
};

std::vector<ColumnPair<double>> gen_synthetic(const StreamConfig& cfg);

/// Malformed stream input; carries the 1-based line number.
class StreamFormatError : public std::runtime_error {
 public:
  StreamFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

void write_stream(std::ostream& os, const StreamHeader& header,
                  const std::vector<ColumnPair<double>>& pairs);
void write_stream(const std::filesystem::path& path, const StreamHeader& header,
                  const std::vector<ColumnPair<double>>& pairs);

std::vector<ColumnPair<double>> read_stream(std::istream& is, StreamHeader* header = nullptr);
std::vector<ColumnPair<double>> load_stream(const std::filesystem::path& path,
                                            StreamHeader* header = nullptr);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace slidewin
