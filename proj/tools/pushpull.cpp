// Command-line front end: `simulate` runs a sweep, `best` picks the
// constrained optimum per scheme from a results CSV.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "pushpull/errors.hpp"
#include "pushpull/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kSimulationError = 3;

std::size_t resolve_workers(std::optional<std::size_t> flag) {
  if (flag && *flag > 0) return *flag;
  if (const char* env = std::getenv("PUSHPULL_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    std::cerr << "warning: ignoring PUSHPULL_WORKERS='" << env << "'\n";
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int simulate(const std::string& config_path, std::optional<std::uint64_t> seed,
             const std::string& out_path, const std::string& frame_log_path,
             std::optional<std::size_t> workers_flag) {
  pushpull::ExperimentSpec spec;
  try {
    spec = pushpull::parse_config(config_path);
    if (seed) {
      spec.base.seed = *seed;
      pushpull::expand_grid(spec);
    }
  } catch (const pushpull::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const pushpull::CalibrationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  std::ofstream frame_log;
  pushpull::PointFrameSink sink;
  if (!frame_log_path.empty()) {
    frame_log.open(frame_log_path);
    if (!frame_log) {
      std::cerr << "cannot open frame log '" << frame_log_path << "'\n";
      return kConfigError;
    }
    sink = [&](std::size_t point, const pushpull::SimConfig&, const pushpull::FrameLog& log) {
      frame_log << pushpull::frame_log_json(point, log) << '\n';
    };
  }

  const auto result = pushpull::run_sweep(spec, resolve_workers(workers_flag), sink);

  if (out_path.empty() || out_path == "-") {
    pushpull::write_csv(std::cout, result.rows);
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot open output '" << out_path << "'\n";
      return kConfigError;
    }
    pushpull::write_csv(out, result.rows);
  }

  if (spec.constraint) {
    const auto best = pushpull::constrained_best(result.rows, *spec.constraint);
    pushpull::write_best_csv(std::cerr, best, *spec.constraint);
  }
  for (const auto& e : result.errors) std::cerr << "simulation error: " << e << '\n';
  return result.errors.empty() ? 0 : kSimulationError;
}

int best(const std::string& in_path, const std::string& constraint_expr,
         const std::string& objective) {
  try {
    const auto constraint = pushpull::parse_constraint(constraint_expr, objective);
    std::ifstream in(in_path);
    if (!in) throw pushpull::ConfigError("cannot open results file '" + in_path + "'");
    const auto rows = pushpull::read_csv(in);
    pushpull::write_best_csv(std::cout, pushpull::constrained_best(rows, constraint),
                             constraint);
  } catch (const pushpull::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Push/pull scheduling simulator for DT drift and anomaly reporting"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string frame_log_path;
  std::optional<std::size_t> workers;
  auto* sim = app.add_subcommand("simulate", "Run the configured sweep and write CSV results");
  sim->add_option("--config", config_path, "JSON experiment file")->required();
  sim->add_option("--seed", seed, "Master seed (overrides the config)");
  sim->add_option("--out", out_path, "Results CSV (stdout when omitted)");
  sim->add_option("--frame-log", frame_log_path, "JSONL trace of episode 0 of every point");
  sim->add_option("--workers", workers, "Worker threads (env PUSHPULL_WORKERS)");

  std::string in_path;
  std::string constraint_expr;
  std::string objective = "psi_avg";
  auto* pick = app.add_subcommand("best", "Best row per scheme under a constraint");
  pick->add_option("--in", in_path, "Results CSV")->required();
  pick->add_option("--constraint", constraint_expr, "e.g. theta_p99<=30")->required();
  pick->add_option("--objective", objective, "Metric to minimize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (*sim) return simulate(config_path, seed, out_path, frame_log_path, workers);
    return best(in_path, constraint_expr, objective);
  } catch (const std::exception& e) {
    std::cerr << "simulation error: " << e.what() << '\n';
    return kSimulationError;
  }
}
