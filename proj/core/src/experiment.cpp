#include "pushpull/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pushpull/errors.hpp"

namespace pushpull {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Metrics and constraints

Metric parse_metric(std::string_view name) {
  std::string n(name);
  if (n.size() > 3 && n.ends_with("_ms")) n.resize(n.size() - 3);
  if (n == "psi_avg") return Metric::PsiAvg;
  if (n == "psi_p99") return Metric::PsiP99;
  if (n == "theta_avg") return Metric::ThetaAvg;
  if (n == "theta_p99") return Metric::ThetaP99;
  throw ConfigError("unknown metric '" + std::string(name) +
                    "' (psi_avg, psi_p99, theta_avg, theta_p99)");
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::PsiAvg: return "psi_avg";
    case Metric::PsiP99: return "psi_p99";
    case Metric::ThetaAvg: return "theta_avg";
    case Metric::ThetaP99: return "theta_p99";
  }
  return "?";
}

Constraint parse_constraint(std::string_view bound_expr, std::string_view objective) {
  const auto at = bound_expr.find("<=");
  if (at == std::string_view::npos) {
    throw ConfigError("constraint must look like 'metric<=value'");
  }
  Constraint c;
  c.metric = parse_metric(bound_expr.substr(0, at));
  const std::string value(bound_expr.substr(at + 2));
  try {
    std::size_t used = 0;
    c.bound = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw ConfigError("constraint bound '" + value + "' is not a number");
  }
  c.objective = parse_metric(objective);
  return c;
}

// ---------------------------------------------------------------------------
// Config keys

namespace {

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
  throw ConfigError("config key '" + key + "': " + why);
}

std::size_t as_count(const Json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    bad_key(key, "expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

double as_real(const Json& v, const std::string& key) {
  if (!v.is_number()) bad_key(key, "expected a number");
  return v.get<double>();
}

std::string as_text(const Json& v, const std::string& key) {
  if (!v.is_string()) bad_key(key, "expected a string");
  return v.get<std::string>();
}

// Applies one flat key. Returns false for unknown keys.
bool apply_key(SimConfig& c, std::optional<std::size_t>& pull_slots,
               const std::string& key, const Json& v) {
  try {
    if (key == "scenario") c.scenario = as_text(v, key);
    else if (key == "dt_nodes") c.dt_nodes = as_count(v, key);
    else if (key == "anomaly_nodes") c.anomaly_nodes = as_count(v, key);
    else if (key == "cluster_size") c.cluster_size = as_count(v, key);
    else if (key == "heterogeneity") {
      if (!v.is_array()) bad_key(key, "expected an array of numbers");
      c.heterogeneity.clear();
      for (const auto& x : v) c.heterogeneity.push_back(as_real(x, key));
    }
    else if (key == "stay_one") c.stay_one = as_real(v, key);
    else if (key == "rho_d_hz") c.drift_rate_hz = as_real(v, key);
    else if (key == "rho_a_hz") c.anomaly_rate_hz = as_real(v, key);
    else if (key == "mu") c.anomaly_resolution = as_real(v, key);
    else if (key == "R") c.frame.total_res = as_count(v, key);
    else if (key == "T") c.frame.frame_duration_s = as_real(v, key);
    else if (key == "R_min") c.frame.r_min = as_count(v, key);
    else if (key == "sigma") c.frame.collision_cap = as_real(v, key);
    else if (key == "theta_risk") c.frame.aoii_risk_threshold = as_count(v, key);
    else if (key == "nu_reset") c.frame.reset_confidence = as_real(v, key);
    else if (key == "eta_hys") c.frame.hysteresis = as_real(v, key);
    else if (key == "theta_cap") c.aoii_cap = as_count(v, key);
    else if (key == "G_fsa") c.fsa.target_load = as_real(v, key);
    else if (key == "gamma") c.fsa.adapt_step = as_real(v, key);
    else if (key == "G_min") c.fsa.min_load = as_real(v, key);
    else if (key == "G_max") c.fsa.max_load = as_real(v, key);
    else if (key == "fsa_p_tx_override") {
      if (v.is_null()) c.fsa_p_tx_override.reset();
      else c.fsa_p_tx_override = as_real(v, key);
    }
    else if (key == "pull") c.policy.pull = parse_pull_policy(as_text(v, key));
    else if (key == "push") c.policy.push = parse_push_policy(as_text(v, key));
    else if (key == "alloc") c.policy.alloc = parse_alloc_policy(as_text(v, key));
    else if (key == "P") c.policy.fixed_push_slots = as_count(v, key);
    else if (key == "Q") {
      if (v.is_null()) pull_slots.reset();
      else pull_slots = as_count(v, key);
    }
    else if (key == "episodes") c.episodes = as_count(v, key);
    else if (key == "frames") c.frames = as_count(v, key);
    else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        bad_key(key, "expected a non-negative integer");
      }
      c.seed = v.get<std::uint64_t>();
    }
    else return false;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    bad_key(key, e.what());
  }
  return true;
}

bool is_config_key(const std::string& key) {
  SimConfig scratch;
  std::optional<std::size_t> q;
  // Probe with a value of the right shape; only unknown keys return false.
  static const std::map<std::string, Json> probes = {
      {"scenario", "het"}, {"heterogeneity", Json::array()}, {"pull", "pps"},
      {"push", "pps"},     {"alloc", "fixed"},               {"fsa_p_tx_override", nullptr},
      {"Q", nullptr}};
  const auto it = probes.find(key);
  return apply_key(scratch, q, key, it != probes.end() ? it->second : Json(1));
}

SimConfig finalize(SimConfig c, const std::optional<std::size_t>& pull_slots) {
  if (pull_slots) c.frame.total_res = *pull_slots + c.policy.fixed_push_slots;
  c.validate();
  return c;
}

Json to_json(const SimConfig& c, const std::optional<std::size_t>& pull_slots) {
  Json j;
  j["scenario"] = c.scenario;
  j["dt_nodes"] = c.dt_nodes;
  j["anomaly_nodes"] = c.anomaly_nodes;
  j["cluster_size"] = c.cluster_size;
  j["heterogeneity"] = c.heterogeneity;
  j["stay_one"] = c.stay_one;
  j["rho_d_hz"] = c.drift_rate_hz;
  j["rho_a_hz"] = c.anomaly_rate_hz;
  j["mu"] = c.anomaly_resolution;
  j["R"] = c.frame.total_res;
  j["T"] = c.frame.frame_duration_s;
  j["R_min"] = c.frame.r_min;
  j["sigma"] = c.frame.collision_cap;
  j["theta_risk"] = c.frame.aoii_risk_threshold;
  j["nu_reset"] = c.frame.reset_confidence;
  j["eta_hys"] = c.frame.hysteresis;
  j["theta_cap"] = c.aoii_cap;
  j["G_fsa"] = c.fsa.target_load;
  j["gamma"] = c.fsa.adapt_step;
  j["G_min"] = c.fsa.min_load;
  j["G_max"] = c.fsa.max_load;
  j["fsa_p_tx_override"] = c.fsa_p_tx_override ? Json(*c.fsa_p_tx_override) : Json(nullptr);
  j["pull"] = std::string(to_string(c.policy.pull));
  j["push"] = std::string(to_string(c.policy.push));
  j["alloc"] = std::string(to_string(c.policy.alloc));
  j["P"] = c.policy.fixed_push_slots;
  j["Q"] = pull_slots ? Json(*pull_slots) : Json(nullptr);
  j["episodes"] = c.episodes;
  j["frames"] = c.frames;
  j["seed"] = c.seed;
  return j;
}

}  // namespace

ExperimentSpec parse_config_text(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");

  ExperimentSpec spec;
  for (const auto& [key, value] : root.items()) {
    if (key == "sweep") {
      if (!value.is_object()) bad_key(key, "expected an object of key -> array");
      for (const auto& [axis, values] : value.items()) {
        if (axis == "sweep" || axis == "constraint" || !is_config_key(axis)) {
          throw ConfigError("sweep axis '" + axis + "' is not a config key");
        }
        if (!values.is_array() || values.empty()) {
          throw ConfigError("sweep axis '" + axis + "' needs a non-empty array");
        }
        SweepAxis a{axis, {}};
        for (const auto& v : values) a.values.push_back(v.dump());
        spec.sweep.push_back(std::move(a));
      }
    } else if (key == "constraint") {
      if (!value.is_object() || !value.contains("metric") || !value.contains("bound")) {
        bad_key(key, "expected {\"metric\", \"bound\", \"objective\"}");
      }
      Constraint c;
      c.metric = parse_metric(as_text(value["metric"], "constraint.metric"));
      c.bound = as_real(value["bound"], "constraint.bound");
      c.objective = parse_metric(
          value.contains("objective") ? as_text(value["objective"], "constraint.objective")
                                      : std::string("psi_avg"));
      spec.constraint = c;
    } else if (!apply_key(spec.base, spec.pull_slots, key, value)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  expand_grid(spec);  // validates every point
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize(const ExperimentSpec& spec) {
  Json j = to_json(spec.base, spec.pull_slots);
  if (!spec.sweep.empty()) {
    Json sweep = Json::object();
    for (const auto& axis : spec.sweep) {
      Json values = Json::array();
      for (const auto& v : axis.values) values.push_back(Json::parse(v));
      sweep[axis.key] = values;
    }
    j["sweep"] = sweep;
  }
  if (spec.constraint) {
    j["constraint"] = {{"metric", std::string(to_string(spec.constraint->metric))},
                       {"bound", spec.constraint->bound},
                       {"objective", std::string(to_string(spec.constraint->objective))}};
  }
  return j.dump(2);
}

std::vector<SimConfig> expand_grid(const ExperimentSpec& spec) {
  std::vector<SimConfig> out;
  std::vector<std::size_t> index(spec.sweep.size(), 0);
  for (;;) {
    SimConfig c = spec.base;
    std::optional<std::size_t> q = spec.pull_slots;
    for (std::size_t a = 0; a < spec.sweep.size(); ++a) {
      const auto& axis = spec.sweep[a];
      apply_key(c, q, axis.key, Json::parse(axis.values[index[a]]));
    }
    out.push_back(finalize(std::move(c), q));
    // Odometer with the last axis fastest.
    std::size_t a = spec.sweep.size();
    while (a > 0) {
      --a;
      if (++index[a] < spec.sweep[a].values.size()) break;
      index[a] = 0;
      if (a == 0) return out;
    }
    if (spec.sweep.empty()) return out;
  }
}

// ---------------------------------------------------------------------------
// Rows

double ResultRow::metric(Metric m) const {
  switch (m) {
    case Metric::PsiAvg: return psi_avg_ms;
    case Metric::PsiP99: return psi_p99_ms;
    case Metric::ThetaAvg: return theta_avg_ms;
    case Metric::ThetaP99: return theta_p99_ms;
  }
  return 0.0;
}

std::string ResultRow::scheme() const {
  std::string s = alloc == "fixed" ? pull_policy + "-" + push_policy : alloc;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  return s;
}

ResultRow make_row(const SimConfig& c, const Summary& s) {
  ResultRow r;
  r.pull_policy = to_string(c.policy.pull);
  r.push_policy = to_string(c.policy.push);
  r.alloc = to_string(c.policy.alloc);
  if (!c.adaptive()) {
    r.push_slots = c.policy.fixed_push_slots;
    r.pull_slots = c.frame.total_res - c.policy.fixed_push_slots;
  }
  r.rho_d_hz = c.drift_rate_hz;
  r.rho_a_hz = c.anomaly_rate_hz;
  r.scenario = c.scenario;
  r.psi_avg_ms = s.psi_avg_ms;
  r.psi_p99_ms = s.psi_p99_ms;
  r.theta_avg_ms = s.theta_avg_ms;
  r.theta_p99_ms = s.theta_p99_ms;
  r.mean_push_res = s.mean_push_res;
  r.collision_rate = s.collision_rate;
  r.episodes = c.episodes;
  r.seed = c.seed;
  return r;
}

SweepResult run_sweep(const ExperimentSpec& spec, std::size_t workers,
                      const PointFrameSink& frame_sink) {
  const std::vector<SimConfig> grid = expand_grid(spec);
  std::vector<std::optional<ResultRow>> rows(grid.size());
  std::vector<std::string> errors(grid.size());
  std::mutex sink_mutex;
  workers = std::max<std::size_t>(workers, 1);

  auto run_point = [&](std::size_t i, std::size_t episode_workers) {
    FrameObserver observer;
    if (frame_sink) {
      observer = [&, i](const Episode&, const FrameLog& log) {
        std::lock_guard lock(sink_mutex);
        frame_sink(i, grid[i], log);
      };
    }
    try {
      const SimContext ctx(grid[i]);
      rows[i] = make_row(grid[i], run_monte_carlo(ctx, episode_workers, observer));
    } catch (const std::exception& e) {
      std::ostringstream os;
      const auto& c = grid[i].policy;
      os << "point " << i << " (" << to_string(c.pull) << "/" << to_string(c.push) << "/"
         << to_string(c.alloc) << ", P=" << c.fixed_push_slots << "): " << e.what();
      errors[i] = os.str();
    }
  };

  if (grid.size() == 1) {
    run_point(0, workers);
  } else {
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < grid.size();) run_point(i, 1);
    };
    const std::size_t n = std::min(workers, grid.size());
    if (n == 1) {
      loop();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n; ++w) pool.emplace_back(loop);
    }
  }

  SweepResult out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (rows[i]) out.rows.push_back(std::move(*rows[i]));
    if (!errors[i].empty()) out.errors.push_back(std::move(errors[i]));
  }
  return out;
}

std::string frame_log_json(std::size_t point, const FrameLog& log) {
  Json j;
  j["point"] = point;
  j["frame"] = log.frame;
  j["Q"] = log.pull_slots;
  j["P"] = log.push_slots;
  j["scheduled"] = log.scheduled;
  j["threshold"] = log.push_threshold;
  j["slots"] = log.slots;
  j["resets"] = log.resets;
  j["psi"] = log.psi;
  j["theta"] = log.theta;
  return j.dump();
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr std::string_view kHeader =
    "pull_policy,push_policy,alloc,Q,P,rho_d_hz,rho_a_hz,scenario,psi_avg_ms,psi_p99_ms,"
    "theta_avg_ms,theta_p99_ms,mean_push_res,collision_rate,episodes,seed";

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("CSV line " + std::to_string(line) + ": '" + s + "' is not a number");
}

std::uint64_t parse_unsigned(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("CSV line " + std::to_string(line) + ": '" + s + "' is not an integer");
}

std::string opt_count(const std::optional<std::size_t>& v) {
  return v ? std::to_string(*v) : std::string();
}

}  // namespace

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kHeader << '\n';
  for (const auto& r : rows) {
    out << r.pull_policy << ',' << r.push_policy << ',' << r.alloc << ','
        << opt_count(r.pull_slots) << ',' << opt_count(r.push_slots) << ','
        << format_float(r.rho_d_hz) << ',' << format_float(r.rho_a_hz) << ',' << r.scenario
        << ',' << format_float(r.psi_avg_ms) << ',' << format_float(r.psi_p99_ms) << ','
        << format_float(r.theta_avg_ms) << ',' << format_float(r.theta_p99_ms) << ','
        << format_float(r.mean_push_res) << ',' << format_float(r.collision_rate) << ','
        << r.episodes << ',' << r.seed << '\n';
  }
}

std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ConfigError("CSV header does not match the results schema");
  std::vector<ResultRow> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 16) {
      throw ConfigError("CSV line " + std::to_string(number) + ": expected 16 fields");
    }
    ResultRow r;
    r.pull_policy = f[0];
    r.push_policy = f[1];
    r.alloc = f[2];
    if (!f[3].empty()) r.pull_slots = parse_unsigned(f[3], number);
    if (!f[4].empty()) r.push_slots = parse_unsigned(f[4], number);
    r.rho_d_hz = parse_real(f[5], number);
    r.rho_a_hz = parse_real(f[6], number);
    r.scenario = f[7];
    r.psi_avg_ms = parse_real(f[8], number);
    r.psi_p99_ms = parse_real(f[9], number);
    r.theta_avg_ms = parse_real(f[10], number);
    r.theta_p99_ms = parse_real(f[11], number);
    r.mean_push_res = parse_real(f[12], number);
    r.collision_rate = parse_real(f[13], number);
    r.episodes = parse_unsigned(f[14], number);
    r.seed = parse_unsigned(f[15], number);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<BestEntry> constrained_best(const std::vector<ResultRow>& rows,
                                        const Constraint& constraint) {
  std::vector<BestEntry> out;
  for (const auto& r : rows) {
    const std::string scheme = r.scheme();
    auto it = std::find_if(out.begin(), out.end(), [&](const BestEntry& b) {
      return b.scheme == scheme && b.scenario == r.scenario && b.rho_d_hz == r.rho_d_hz &&
             b.rho_a_hz == r.rho_a_hz;
    });
    if (it == out.end()) {
      out.push_back({scheme, r.scenario, r.rho_d_hz, r.rho_a_hz, std::nullopt});
      it = std::prev(out.end());
    }
    if (!(r.metric(constraint.metric) <= constraint.bound)) continue;
    if (!it->row || r.metric(constraint.objective) < it->row->metric(constraint.objective)) {
      it->row = r;
    }
  }
  return out;
}

void write_best_csv(std::ostream& out, const std::vector<BestEntry>& best,
                    const Constraint& constraint) {
  out << "scheme,scenario,rho_d_hz,rho_a_hz,status,Q,P,objective,objective_ms,"
         "psi_avg_ms,psi_p99_ms,theta_avg_ms,theta_p99_ms\n";
  for (const auto& b : best) {
    out << b.scheme << ',' << b.scenario << ',' << format_float(b.rho_d_hz) << ','
        << format_float(b.rho_a_hz) << ',';
    if (!b.row) {
      out << "infeasible,,," << to_string(constraint.objective) << ",,,,,\n";
      continue;
    }
    const auto& r = *b.row;
    out << "ok," << opt_count(r.pull_slots) << ',' << opt_count(r.push_slots) << ','
        << to_string(constraint.objective) << ','
        << format_float(r.metric(constraint.objective)) << ',' << format_float(r.psi_avg_ms)
        << ',' << format_float(r.psi_p99_ms) << ',' << format_float(r.theta_avg_ms) << ','
        << format_float(r.theta_p99_ms) << '\n';
  }
}

}  // namespace pushpull
