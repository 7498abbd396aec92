// slidewin: generate streams, run sliding-window sketches, compare runs.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "slidewin/bench.hpp"
#include "slidewin/stream_io.hpp"

namespace {

using namespace slidewin;

constexpr int kConfigError = 2;
constexpr int kBoundViolation = 3;

struct StreamFlags {
  std::string gen;
  std::string input;
  std::optional<std::uint64_t> seed;
  std::string mode = "sequence";
  std::optional<Timestamp> window;
  std::optional<double> R;
  std::optional<Timestamp> query_every;
  bool timing = false;
  std::string out;
  bool assert_bound = false;

  void add_to(CLI::App* app, bool run_flags) {
    app->add_option("--gen", gen, "generator spec, e.g. mx=40,my=60,n=5000,N=1000,R=64");
    app->add_option("--seed", seed, "stream seed (SLIDEWIN_SEED overrides)");
    app->add_option("--mode", mode, "window mode: sequence or time");
    app->add_option("--out", out, "output path (default stdout)");
    if (!run_flags) return;
    app->add_option("--input", input, "cpsv1 stream file");
    app->add_option("--window", window, "window size N");
    app->add_option("--R", R, "norm-ratio bound, needed by hds on file input");
    app->add_option("--query-every", query_every, "query cadence in timestamps");
    app->add_flag("--timing", timing, "fill update_time_us");
    app->add_flag("--assert-bound", assert_bound, "exit 3 if an error bound is exceeded");
  }

  RunConfig base() const {
    RunConfig c;
    if (!gen.empty()) c.gen = parse_gen_spec(gen);
    if (!input.empty()) c.input = input;
    c.seed = seed;
    if (const char* env = std::getenv("SLIDEWIN_SEED"); env && *env) {
      try {
        c.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("SLIDEWIN_SEED is not an integer: ") + env);
      }
    }
    c.mode = parse_mode(mode);
    c.window = window;
    c.R = R;
    c.query_every = query_every;
    c.timing = timing;
    return c;
  }
};

template <typename F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write(os);
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int report(const std::vector<RunResult>& results, const StreamFlags& f) {
  with_output(f.out, [&](std::ostream& os) { write_csv(os, results); });
  if (!f.assert_bound) return 0;
  int code = 0;
  for (const auto& r : results)
    if (!r.within_bound()) {
      std::cerr << "bound violated: " << r.config.label << " max corr_err " << r.max_err << " > "
                << r.bound() << '\n';
      code = kBoundViolation;
    }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sliding-window correlation sketches"};
  app.require_subcommand(1);

  StreamFlags gen_flags;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic stream in cpsv1 format");
  gen_flags.add_to(gen_cmd, false);

  StreamFlags run_flags;
  std::string algorithm = "hds";
  std::optional<Index> ell;
  std::optional<double> eps;
  auto* run_cmd = app.add_subcommand("run", "run one algorithm and print metrics CSV");
  run_flags.add_to(run_cmd, true);
  run_cmd->add_option("--algorithm", algorithm, "hds, ads, cod or naive");
  run_cmd->add_option("--ell", ell, "sketch size");
  run_cmd->add_option("--eps", eps, "accuracy; sets ell = ceil(1/eps)");

  StreamFlags cmp_flags;
  std::string algorithms = "hds,ads";
  std::string ells;
  std::optional<double> cmp_eps;
  auto* cmp_cmd = app.add_subcommand("compare", "run several configurations on one stream");
  cmp_flags.add_to(cmp_cmd, true);
  cmp_cmd->add_option("--algorithms", algorithms, "comma-separated algorithms");
  cmp_cmd->add_option("--ells", ells, "comma-separated sketch sizes");
  cmp_cmd->add_option("--eps", cmp_eps, "accuracy for every run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*gen_cmd) {
      RunConfig c = gen_flags.base();
      if (!c.gen) throw ConfigError("gen needs --gen");
      StreamHeader header;
      const auto pairs = materialize_stream(c, &header);
      with_output(gen_flags.out, [&](std::ostream& os) { write_stream(os, header, pairs); });
      return 0;
    }
    if (*run_cmd) {
      RunConfig c = run_flags.base();
      c.algorithm = parse_algorithm(algorithm);
      c.ell = ell;
      c.eps = eps;
      return report({run(c)}, run_flags);
    }
    std::vector<RunConfig> cfgs;
    const auto algs = split(algorithms);
    const auto ell_list = split(ells);
    if (algs.empty()) throw ConfigError("--algorithms is empty");
    if (ell_list.empty() == !cmp_eps.has_value()) throw ConfigError("give exactly one of --ells and --eps");
    for (const auto& a : algs) {
      if (ell_list.empty()) {
        RunConfig c = cmp_flags.base();
        c.algorithm = parse_algorithm(a);
        c.eps = cmp_eps;
        cfgs.push_back(c);
        continue;
      }
      for (const auto& l : ell_list) {
        RunConfig c = cmp_flags.base();
        c.algorithm = parse_algorithm(a);
        try {
          c.ell = std::stoll(l);
        } catch (const std::exception&) {
          throw ConfigError("bad sketch size '" + l + "'");
        }
        if (ell_list.size() > 1) c.label = a + "_l" + l;
        cfgs.push_back(c);
      }
    }
    return report(compare(cfgs), cmp_flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const StreamFormatError& e) {
    std::cerr << "stream error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
