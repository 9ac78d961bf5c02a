#include <doctest.h>

#include <sstream>

#include "pushpull/errors.hpp"
#include "pushpull/experiment.hpp"

using namespace pushpull;

namespace {

ResultRow row(std::string pull, std::string push, std::size_t p, double psi, double theta99) {
  ResultRow r;
  r.pull_policy = std::move(pull);
  r.push_policy = std::move(push);
  r.alloc = "fixed";
  r.push_slots = p;
  r.pull_slots = 20 - p;
  r.rho_d_hz = 3;
  r.rho_a_hz = 3;
  r.scenario = "het";
  r.psi_avg_ms = psi;
  r.theta_p99_ms = theta99;
  r.episodes = 10;
  r.seed = 1;
  return r;
}

}  // namespace

TEST_CASE("an empty object gives the defaults") {
  const auto spec = parse_config_text("{}");
  CHECK(spec.base == SimConfig{});
  CHECK(spec.sweep.empty());
  CHECK_FALSE(spec.constraint);
  CHECK(expand_grid(spec).size() == 1);
}

TEST_CASE("config errors name the key") {
  auto message = [](std::string_view text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"bogus": 1})").find("bogus") != std::string::npos);
  CHECK(message(R"({"P": "ten"})").find('P') != std::string::npos);
  CHECK(message(R"({"alloc": "rsm", "R_min": 11})").find("R_min") != std::string::npos);
  CHECK_FALSE(message(R"({"sweep": {"frames": [1, 2], "nope": [1]}})").empty());
  CHECK_FALSE(message(R"({"constraint": {"metric": "latency", "bound": 3}})").empty());
  CHECK_FALSE(message("[1, 2]").empty());
  CHECK_FALSE(message("{").empty());
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"rho_d_hz": 500})"), ConfigError);
}

TEST_CASE("grid expansion") {
  SUBCASE("push slots") {
    const auto spec =
        parse_config_text(R"({"sweep": {"P": [3,4,5,6,7,8,9,10,11,12,13,14,15,16,17]}})");
    const auto grid = expand_grid(spec);
    REQUIRE(grid.size() == 15);
    CHECK(grid.front().policy.fixed_push_slots == 3);
    CHECK(grid.back().policy.fixed_push_slots == 17);
  }
  SUBCASE("Q with two scenarios, first axis outermost") {
    const auto spec = parse_config_text(
        R"({"P": 0, "sweep": {"Q": [5,6,7,8,9,10,11,12,13,14,15], "scenario": ["hom", "het"]}})");
    const auto grid = expand_grid(spec);
    REQUIRE(grid.size() == 22);
    CHECK(grid[0].frame.total_res == 5);
    CHECK(grid[0].scenario == "hom");
    CHECK(grid[1].scenario == "het");
    CHECK(grid[2].frame.total_res == 6);
    CHECK(grid[21].frame.total_res == 15);
  }
  SUBCASE("Q sets R to Q + P") {
    const auto grid = expand_grid(parse_config_text(R"({"Q": 6, "P": 4})"));
    CHECK(grid[0].frame.total_res == 10);
    CHECK(grid[0].policy.fixed_push_slots == 4);
  }
}

TEST_CASE("serialize round-trips") {
  const auto spec = parse_config_text(R"({
    "scenario": "hom", "rho_d_hz": 1.5, "fsa_p_tx_override": 0.25, "Q": 7, "P": 3,
    "pull": "cra", "push": "afsa", "seed": 12345678901,
    "sweep": {"P": [2, 3], "rho_a_hz": [1, 3]},
    "constraint": {"metric": "theta_p99", "bound": 30, "objective": "psi_avg_ms"}})");
  CHECK(parse_config_text(serialize(spec)) == spec);
  CHECK(parse_config_text(serialize(ExperimentSpec{})) == ExperimentSpec{});
}

TEST_CASE("constraint parsing") {
  const auto c = parse_constraint("theta_p99<=30", "psi_avg");
  CHECK(c.metric == Metric::ThetaP99);
  CHECK(c.bound == 30.0);
  CHECK(c.objective == Metric::PsiAvg);
  CHECK(parse_metric("psi_p99_ms") == Metric::PsiP99);
  CHECK_THROWS_AS(parse_metric("jitter"), ConfigError);
  CHECK_THROWS_AS(parse_constraint("theta_p99>=30", "psi_avg"), ConfigError);
}

TEST_CASE("float formatting") {
  CHECK(format_float(0.5) == "0.5");
  CHECK(format_float(3.0) == "3");
  CHECK(format_float(1.0 / 3.0) == "0.333333");
  CHECK(format_float(1234567.0) == "1.23457e+06");
}

TEST_CASE("CSV") {
  std::vector<ResultRow> rows{row("pps", "pps", 5, 1.25, 30), row("maf", "fsa", 7, 0.5, 60)};
  ResultRow adaptive = row("pps", "pps", 0, 1.0, 20);
  adaptive.alloc = "rsm";
  adaptive.pull_slots.reset();
  adaptive.push_slots.reset();
  rows.push_back(adaptive);

  std::stringstream buf;
  write_csv(buf, rows);
  std::string header;
  std::getline(std::istringstream(buf.str()), header);
  CHECK(header ==
        "pull_policy,push_policy,alloc,Q,P,rho_d_hz,rho_a_hz,scenario,psi_avg_ms,psi_p99_ms,"
        "theta_avg_ms,theta_p99_ms,mean_push_res,collision_rate,episodes,seed");

  const auto back = read_csv(buf);
  REQUIRE(back.size() == 3);
  CHECK(back[0].scheme() == "PPS-PPS");
  CHECK(back[1].scheme() == "MAF-FSA");
  CHECK(back[2].scheme() == "RSM");
  CHECK(back[1].push_slots == 7u);
  CHECK(back[1].pull_slots == 13u);
  CHECK_FALSE(back[2].push_slots);
  CHECK(back[0].psi_avg_ms == 1.25);
  CHECK(back[1].theta_p99_ms == 60.0);

  std::istringstream empty("");
  CHECK_THROWS_AS(read_csv(empty), ConfigError);
  std::istringstream wrong("a,b,c\n1,2,3\n");
  CHECK_THROWS_AS(read_csv(wrong), ConfigError);
  std::stringstream bad;
  write_csv(bad, {});
  bad << "pps,pps,fixed,5,5,3,3,het,x,1,1,1,1,0,1,1\n";
  CHECK_THROWS_AS(read_csv(bad), ConfigError);
}

TEST_CASE("constrained best") {
  const Constraint c{Metric::ThetaP99, 30.0, Metric::PsiAvg};
  SUBCASE("infeasible scheme") {
    const auto best = constrained_best({row("pps", "pps", 5, 1.0, 40)}, c);
    REQUIRE(best.size() == 1);
    CHECK(best[0].scheme == "PPS-PPS");
    CHECK_FALSE(best[0].row);
  }
  SUBCASE("single feasible row") {
    const auto best = constrained_best({row("pps", "pps", 5, 1.0, 30)}, c);
    REQUIRE(best[0].row);
    CHECK(best[0].row->push_slots == 5u);
  }
  SUBCASE("smallest objective among feasible rows, per scheme") {
    const auto best = constrained_best({row("pps", "pps", 3, 0.6, 50), row("maf", "maf", 4, 2.0, 10),
                                        row("pps", "pps", 5, 0.9, 30), row("pps", "pps", 7, 1.1, 20)},
                                       c);
    REQUIRE(best.size() == 2);
    CHECK(best[0].scheme == "PPS-PPS");
    CHECK(best[0].row->push_slots == 5u);
    CHECK(best[1].scheme == "MAF-MAF");
    CHECK(best[1].row->push_slots == 4u);
  }
}

TEST_CASE("sweeps are reproducible") {
  const auto spec = parse_config_text(R"({
    "dt_nodes": 8, "anomaly_nodes": 10, "R": 6, "episodes": 3, "frames": 60, "seed": 4,
    "sweep": {"P": [2, 3]}})");
  const auto a = run_sweep(spec, 1);
  const auto b = run_sweep(spec, 2);
  REQUIRE(a.errors.empty());
  REQUIRE(a.rows.size() == 2);
  std::stringstream sa, sb;
  write_csv(sa, a.rows);
  write_csv(sb, b.rows);
  CHECK(sa.str() == sb.str());
  CHECK(a.rows[0].push_slots == 2u);
  CHECK(a.rows[1].push_slots == 3u);
}

TEST_CASE("frame log JSON") {
  FrameLog log;
  log.frame = 3;
  log.push_slots = 2;
  log.slots = {0, -1};
  const auto line = frame_log_json(1, log);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"frame\":3") != std::string::npos);
}
