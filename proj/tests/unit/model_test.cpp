#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "pushpull/errors.hpp"
#include "pushpull/model.hpp"

using namespace pushpull;

namespace {

DriftClusterModel two_state(double up) {
  return DriftClusterModel(2, 0, {1.0 - up, up, 0.0, 1.0}, {false, true},
                           ObservationModel::binary_error_free(1));
}

double three_sigma(double p, double n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST_CASE("topology: clusters partition the DT nodes") {
  const auto topo = NetworkTopology::make(20, 4, 100);
  CHECK(topo.num_nodes == 100);
  CHECK(topo.dt_nodes.size() == 80);
  CHECK(topo.anomaly_nodes.size() == 100);
  std::set<NodeId> seen;
  for (const auto& c : topo.clusters) {
    CHECK(c.size() == 4);
    for (NodeId n : c) CHECK(seen.insert(n).second);
  }
  CHECK(seen.size() == 80);
  CHECK(topo.cluster_of(9) == 2);
  CHECK(topo.position_in_cluster(9) == 1);
  CHECK(topo.cluster_of(85) == -1);
  CHECK_NOTHROW(topo.validate());
  CHECK_THROWS_AS(topo.position_in_cluster(85), ContractViolation);
}

TEST_CASE("transition rows are stochastic and the initial state is aligned") {
  CHECK_THROWS_AS(DriftClusterModel(2, 0, {0.5, 0.4, 0.0, 1.0}, {false, true},
                                    ObservationModel::binary_error_free(1)),
                  ContractViolation);
  CHECK_THROWS_AS(DriftClusterModel(2, 1, {0.5, 0.5, 0.0, 1.0}, {false, true},
                                    ObservationModel::binary_error_free(1)),
                  ContractViolation);
}

TEST_CASE("step_cluster") {
  Rng rng(7);
  SUBCASE("identity matrix keeps the state") {
    DriftClusterModel m(3, 0, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {false, false, true},
                        ObservationModel(3, {1}, {1.0, 1.0, 1.0}));
    for (StateId s = 0; s < 3; ++s) CHECK(step_cluster(m, s, rng) == s);
  }
  SUBCASE("empirical flip frequency matches the row") {
    const auto m = two_state(0.1);
    const double n = 1e6;
    std::size_t moved = 0;
    for (int i = 0; i < 1000000; ++i) moved += step_cluster(m, 0, rng) == 1;
    CHECK(std::abs(moved / n - 0.1) <= three_sigma(0.1, n));
  }
  SUBCASE("a two-sensor cluster in drift stays put") {
    const auto m = make_binary_cluster(std::vector<double>{0.3, 0.4}, 0.9, 2);
    for (int i = 0; i < 1000; ++i) CHECK(step_cluster(m, 3, rng) == 3);
  }
  SUBCASE("unknown state is a contract violation") {
    CHECK_THROWS_AS(step_cluster(two_state(0.1), 5, rng), ContractViolation);
  }
}

TEST_CASE("step_anomaly") {
  Rng rng(11);
  SUBCASE("a report clears the anomaly") {
    AnomalyProcess p(1, {0}, {1.0}, {0.0});
    step_anomaly(p, 0, false, rng);
    REQUIRE(p.active(0));
    const auto s = step_anomaly(p, 0, true, rng);
    CHECK_FALSE(s.active);
    CHECK(s.aoii == 0);
  }
  SUBCASE("arrival frequency") {
    std::size_t idle = 0;
    std::size_t hits = 0;
    AnomalyProcess p(1, {0}, {0.1}, {0.0});
    for (int i = 0; i < 1000000; ++i) {
      const bool was_active = p.active(0);
      const bool now = step_anomaly(p, 0, true, rng).active;
      if (was_active) continue;
      ++idle;
      hits += now;
    }
    const double n = static_cast<double>(idle);
    CHECK(std::abs(hits / n - 0.1) <= three_sigma(0.1, n));
  }
  SUBCASE("without resolution the age keeps growing") {
    AnomalyProcess p(1, {0}, {1.0}, {0.0});
    for (std::uint32_t k = 1; k <= 4; ++k) CHECK(step_anomaly(p, 0, false, rng).aoii == k);
  }
  SUBCASE("rates are validated") {
    CHECK_THROWS_AS(AnomalyProcess(1, {0}, {0.7}, {0.5}), ContractViolation);
    AnomalyProcess p(2, {1}, {0.1}, {0.0});
    CHECK_THROWS_AS(step_anomaly(p, 0, false, rng), ContractViolation);
  }
}

TEST_CASE("binary scenario factory") {
  BinaryMajorityScenario spec;
  spec.num_clusters = 3;
  SUBCASE("homogeneous flip-ups are equal") {
    spec.heterogeneity = BinaryMajorityScenario::homogeneous(4);
    const auto models = build_binary_scenario(spec);
    REQUIRE(models.size() == 3);
    const auto& m = models[0];
    for (std::size_t b = 1; b < 4; ++b) {
      CHECK(m.transition(0, 1u << b) == doctest::Approx(m.transition(0, 1)).epsilon(1e-12));
    }
  }
  SUBCASE("heterogeneous ratios are preserved") {
    spec.heterogeneity = BinaryMajorityScenario::heterogeneous_default();
    const auto m = build_binary_scenario(spec)[0];
    // Single flips out of the all-zero state reveal u_b * prod(1 - u_other).
    auto u = [&](std::size_t b) {
      const double stay = m.transition(0, 0);
      const double single = m.transition(0, 1u << b);
      return single / (stay + single);
    };
    CHECK(u(3) / u(0) == doctest::Approx(7.5).epsilon(1e-9));
    CHECK(u(1) / u(0) == doctest::Approx(7.0).epsilon(1e-9));
  }
  SUBCASE("independent flips multiply") {
    const auto m = make_binary_cluster(std::vector<double>{0.1, 0.1}, 0.9, 2);
    CHECK(m.transition(0, 3) == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("every row sums to one") {
    for (const auto& m : build_binary_scenario(spec)) {
      for (StateId y = 0; y < m.num_states(); ++y) {
        double sum = 0.0;
        for (double v : m.transition_row(y)) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("drift set is the majority rule") {
  CHECK_FALSE(is_majority_drift(0b0001, 4));
  CHECK(is_majority_drift(0b0101, 4));
  CHECK(is_majority_drift(0b1110, 4));
  CHECK_FALSE(is_majority_drift(0b001, 3));
  CHECK(is_majority_drift(0b011, 3));
}

TEST_CASE("drift rate calibration") {
  SUBCASE("single sensor closed form") {
    const auto u = calibrate_drift_rate(std::vector<double>{1.0}, 0.9, 1, 5.0, 0.01);
    CHECK(u[0] == doctest::Approx(0.05).epsilon(1e-6));
  }
  SUBCASE("hits the requested absorption time") {
    const std::vector<double> base{1.0 / 7.5, 7.0 / 7.5, 7.25 / 7.5, 1.0};
    const auto u = calibrate_drift_rate(base, 0.9, 4, 3.0, 0.01);
    const auto m = make_binary_cluster(u, 0.9, 4);
    CHECK(expected_absorption_time(m) == doctest::Approx(100.0 / 3.0).epsilon(1e-6));
    CHECK(u[3] / u[0] == doctest::Approx(7.5).epsilon(1e-12));
  }
  SUBCASE("lower rates need smaller flips") {
    const std::vector<double> base{1.0, 1.0, 1.0, 1.0};
    double previous = 1.0;
    for (double rate : {4.0, 2.0, 1.0, 0.5, 0.1}) {
      const double s = calibrate_drift_rate(base, 0.9, 4, rate, 0.01)[0];
      CHECK(s < previous);
      previous = s;
    }
  }
  SUBCASE("unreachable rates report the achievable range") {
    try {
      calibrate_drift_rate(std::vector<double>{1.0, 0.01, 0.01, 0.01}, 0.9, 4, 20.0, 0.01);
      FAIL("expected a calibration error");
    } catch (const CalibrationError& e) {
      CHECK(e.max_rate_hz() > 0.0);
      CHECK(e.max_rate_hz() < 20.0);
    }
  }
}

TEST_CASE("absorption time agrees with simulation") {
  Rng rng(2024);
  const std::vector<std::vector<double>> specs{
      {0.2}, {0.05, 0.3}, {0.1, 0.1, 0.1}, {0.02, 0.14, 0.145, 0.15}, {0.3, 0.01, 0.2, 0.05}};
  for (const auto& u : specs) {
    const auto m = make_binary_cluster(u, 0.9, u.size());
    const double exact = expected_absorption_time(m);
    const double simulated = oracle::simulated_absorption(m, 100000, rng);
    CAPTURE(u.size());
    CHECK(std::abs(simulated - exact) <= 0.05 * exact);
  }
}

TEST_CASE("drift states never lose a raised sensor") {
  Rng rng(5);
  const auto m = make_binary_cluster(std::vector<double>{0.2, 0.3, 0.25, 0.1}, 0.9, 4);
  for (StateId y = 0; y < m.num_states(); ++y) {
    if (!m.is_drift(y)) continue;
    for (int i = 0; i < 200; ++i) {
      const StateId z = m.sample_next(y, rng);
      CHECK((z & y) == y);
    }
  }
}
