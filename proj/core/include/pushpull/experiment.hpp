#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pushpull/engine.hpp"

namespace pushpull {

/// Metrics usable in constraints and objectives.
enum class Metric { PsiAvg, PsiP99, ThetaAvg, ThetaP99 };

/// Accepts "psi_avg" or "psi_avg_ms" and so on. Throws ConfigError.
Metric parse_metric(std::string_view name);
std::string_view to_string(Metric m);

struct Constraint {
  Metric metric = Metric::ThetaP99;
  double bound = 0.0;
  Metric objective = Metric::PsiAvg;

  bool operator==(const Constraint&) const = default;
};

/// Parses "theta_p99<=30".
Constraint parse_constraint(std::string_view bound_expr, std::string_view objective);

struct SweepAxis {
  std::string key;
  std::vector<std::string> values;  ///< JSON literals

  bool operator==(const SweepAxis&) const = default;
};

struct ExperimentSpec {
  SimConfig base;
  /// When set, R becomes Q + P at every grid point.
  std::optional<std::size_t> pull_slots;
  std::vector<SweepAxis> sweep;
  std::optional<Constraint> constraint;

  bool operator==(const ExperimentSpec&) const = default;
};

/// Flat JSON object; unspecified keys keep their defaults. Throws
/// ConfigError with a message naming the offending key.
ExperimentSpec parse_config_text(std::string_view text);
ExperimentSpec parse_config(const std::filesystem::path& path);
/// Writes every key, so parse(serialize(x)) == x.
std::string serialize(const ExperimentSpec& spec);

/// Cartesian product of the sweep axes, first axis outermost.
std::vector<SimConfig> expand_grid(const ExperimentSpec& spec);

struct ResultRow {
  std::string pull_policy;
  std::string push_policy;
  std::string alloc;
  std::optional<std::size_t> pull_slots;
  std::optional<std::size_t> push_slots;
  double rho_d_hz = 0.0;
  double rho_a_hz = 0.0;
  std::string scenario;
  double psi_avg_ms = 0.0;
  double psi_p99_ms = 0.0;
  double theta_avg_ms = 0.0;
  double theta_p99_ms = 0.0;
  double mean_push_res = 0.0;
  double collision_rate = 0.0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;

  double metric(Metric m) const;
  /// "PPS-PPS", "MAF-FSA", or the allocator name for adaptive splits.
  std::string scheme() const;
};

ResultRow make_row(const SimConfig& config, const Summary& summary);

struct SweepResult {
  std::vector<ResultRow> rows;  ///< grid order, failed points omitted
  std::vector<std::string> errors;
};

using PointFrameSink =
    std::function<void(std::size_t point, const SimConfig&, const FrameLog&)>;

/// Runs every grid point on a bounded worker pool. Engine errors are
/// collected per point and the remaining points still run.
SweepResult run_sweep(const ExperimentSpec& spec, std::size_t workers,
                      const PointFrameSink& frame_sink = {});

std::string frame_log_json(std::size_t point, const FrameLog& log);

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows);
/// Throws ConfigError on a malformed header or row.
std::vector<ResultRow> read_csv(std::istream& in);

struct BestEntry {
  std::string scheme;
  std::string scenario;
  double rho_d_hz = 0.0;
  double rho_a_hz = 0.0;
  std::optional<ResultRow> row;  ///< empty when nothing meets the bound
};

/// Per scheme (and scenario and rates), the feasible row with the smallest
/// objective. Schemes keep their order of first appearance.
std::vector<BestEntry> constrained_best(const std::vector<ResultRow>& rows,
                                        const Constraint& constraint);

void write_best_csv(std::ostream& out, const std::vector<BestEntry>& best,
                    const Constraint& constraint);

/// printf-style "%.6g".
std::string format_float(double v);

}  // namespace pushpull
