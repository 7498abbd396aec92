#include "slidewin/stream_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string_view>

namespace slidewin {

void StreamConfig::validate() const {
  if (m_x < 1 || m_y < 1) throw std::invalid_argument("stream config: m_x and m_y must be positive");
  if (n < 1) throw std::invalid_argument("stream config: n must be positive");
  if (!(R >= 1.0) || !std::isfinite(R)) throw std::invalid_argument("stream config: R must be >= 1");
  for (const auto& r : regimes)
    if (!(r.scale > 0.0) || r.start_step < 0)
      throw std::invalid_argument("stream config: regime scale must be positive");
  if (arrival == Arrival::poisson && !(lambda >= 0.0))
    throw std::invalid_argument("stream config: lambda must be non-negative");
}

std::uint64_t Rng::splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::int64_t Rng::poisson(double lambda) {
  const double limit = std::exp(-lambda);
  std::int64_t k = 0;
  double p = uniform();
  while (p > limit) {
    ++k;
    p *= uniform();
  }
  return k;
}

SyntheticStream::SyntheticStream(StreamConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
  std::sort(cfg_.regimes.begin(), cfg_.regimes.end(),
            [](const Regime& a, const Regime& b) { return a.start_step < b.start_step; });
}

double SyntheticStream::regime_peak(Timestamp t) const {
  double scale = 1.0;
  for (const auto& r : cfg_.regimes)
    if (t > r.start_step) scale = r.scale;
  return std::clamp(scale * cfg_.R, 1.0, cfg_.R);
}

ColumnPair<double> SyntheticStream::next() {
  if (done()) throw std::out_of_range("SyntheticStream: exhausted");
  ++t_;
  ColumnPair<double> p{Eigen::VectorXd::Zero(cfg_.m_x), Eigen::VectorXd::Zero(cfg_.m_y), t_};
  if (pending_zeros_ > 0) {
    --pending_zeros_;
    return p;
  }
  for (Index i = 0; i < cfg_.m_x; ++i) p.x(i) = rng_.uniform();
  for (Index i = 0; i < cfg_.m_y; ++i) p.y(i) = rng_.uniform();
  const double peak = regime_peak(t_);
  const double target = 1.0 + (peak - 1.0) * rng_.uniform();
  const double raw = p.x.norm() * p.y.norm();
  if (raw > 0.0) {
    const double c = std::sqrt(target / raw);
    p.x *= c;
    p.y *= c;
  } else {
    // Measure-zero event; fall back to a flat pair with the target product.
    p.x.setConstant(std::sqrt(std::sqrt(target) / static_cast<double>(cfg_.m_x)));
    p.y.setConstant(std::sqrt(std::sqrt(target) / static_cast<double>(cfg_.m_y)));
  }
  if (cfg_.arrival == Arrival::poisson) pending_zeros_ = rng_.poisson(cfg_.lambda);
  return p;
}

std::vector<ColumnPair<double>> gen_synthetic(const StreamConfig& cfg) {
  SyntheticStream s(cfg);
  std::vector<ColumnPair<double>> out;
  out.reserve(static_cast<std::size_t>(cfg.n));
  while (!s.done()) out.push_back(s.next());
  return out;
}

StreamFormatError::StreamFormatError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_stream(std::ostream& os, const StreamHeader& header,
                  const std::vector<ColumnPair<double>>& pairs) {
  os << "cpsv1 m_x=" << header.m_x << " m_y=" << header.m_y << " n=" << header.n << '\n';
  std::string line;
  for (const auto& p : pairs) {
    line.clear();
    line += "t=";
    line += std::to_string(p.t);
    line += '|';
    for (Index i = 0; i < p.x.size(); ++i) {
      if (i) line += ',';
      line += format_double(p.x(i));
    }
    line += '|';
    for (Index i = 0; i < p.y.size(); ++i) {
      if (i) line += ',';
      line += format_double(p.y(i));
    }
    line += '\n';
    os << line;
  }
}

void write_stream(const std::filesystem::path& path, const StreamHeader& header,
                  const std::vector<ColumnPair<double>>& pairs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_stream(os, header, pairs);
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

namespace {

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw StreamFormatError(line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return value;
}

Index parse_header_field(std::string_view token, std::string_view key, std::size_t line) {
  if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=')
    throw StreamFormatError(line, "expected " + std::string(key) + "=<int> in header");
  const auto v = parse_number<long long>(token.substr(key.size() + 1), line, "header value");
  if (v < 0) throw StreamFormatError(line, "negative header value");
  return static_cast<Index>(v);
}

void parse_vector(std::string_view field, Eigen::VectorXd& out, std::size_t line, const char* what) {
  Index i = 0;
  std::size_t pos = 0;
  while (true) {
    const auto comma = field.find(',', pos);
    const auto token = field.substr(pos, comma == std::string_view::npos ? comma : comma - pos);
    if (i >= out.size())
      throw StreamFormatError(line, std::string("too many values in ") + what);
    out(i++) = parse_number<double>(token, line, "float");
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  if (i != out.size())
    throw StreamFormatError(line, std::string("expected ") + std::to_string(out.size()) +
                                      " values in " + what + ", got " + std::to_string(i));
}

}  // namespace

std::vector<ColumnPair<double>> read_stream(std::istream& is, StreamHeader* header_out) {
  std::string text;
  std::size_t line_no = 1;
  if (!std::getline(is, text)) throw StreamFormatError(1, "missing header");
  std::istringstream hs(text);
  std::string magic, fx, fy, fn, extra;
  hs >> magic >> fx >> fy >> fn;
  if (magic != "cpsv1") throw StreamFormatError(1, "expected 'cpsv1' header");
  if (hs >> extra) throw StreamFormatError(1, "trailing header field '" + extra + "'");
  StreamHeader header;
  header.m_x = parse_header_field(fx, "m_x", 1);
  header.m_y = parse_header_field(fy, "m_y", 1);
  header.n = static_cast<Timestamp>(parse_header_field(fn, "n", 1));
  if (header.m_x < 1 || header.m_y < 1) throw StreamFormatError(1, "dimensions must be positive");

  std::vector<ColumnPair<double>> pairs;
  pairs.reserve(static_cast<std::size_t>(header.n));
  Timestamp last = 0;
  while (std::getline(is, text)) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.pop_back();
    if (text.empty()) continue;
    std::string_view row(text);
    const auto bar1 = row.find('|');
    const auto bar2 = bar1 == std::string_view::npos ? bar1 : row.find('|', bar1 + 1);
    if (bar2 == std::string_view::npos || row.find('|', bar2 + 1) != std::string_view::npos)
      throw StreamFormatError(line_no, "expected t=<int>|<x>|<y>");
    const auto tfield = row.substr(0, bar1);
    if (tfield.substr(0, 2) != "t=") throw StreamFormatError(line_no, "expected t=<int>");
    ColumnPair<double> p{Eigen::VectorXd(header.m_x), Eigen::VectorXd(header.m_y), 0};
    p.t = parse_number<long long>(tfield.substr(2), line_no, "timestamp");
    if (p.t <= last)
      throw StreamFormatError(line_no, "timestamp " + std::to_string(p.t) +
                                           " is not greater than " + std::to_string(last));
    parse_vector(row.substr(bar1 + 1, bar2 - bar1 - 1), p.x, line_no, "x");
    parse_vector(row.substr(bar2 + 1), p.y, line_no, "y");
    last = p.t;
    pairs.push_back(std::move(p));
  }
  if (static_cast<Timestamp>(pairs.size()) != header.n)
    throw StreamFormatError(line_no, "header promises " + std::to_string(header.n) + " pairs, found " +
                                         std::to_string(pairs.size()));
  if (header_out) *header_out = header;
  return pairs;
}

std::vector<ColumnPair<double>> load_stream(const std::filesystem::path& path, StreamHeader* header) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_stream(is, header);
}

}  // namespace slidewin
