#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pushpull/engine.hpp"
#include "pushpull/scheduling.hpp"
#include "pushpull/tracking.hpp"

using namespace pushpull;

namespace {

double total(std::span<const double> pmf) { return std::accumulate(pmf.begin(), pmf.end(), 0.0); }

std::vector<double> random_pmf(std::size_t n, std::mt19937_64& rng, double sparsity = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> p(n);
  for (auto& v : p) v = u(rng) < sparsity ? 0.0 : u(rng);
  if (total(p) == 0.0) p[0] = 1.0;
  const double s = total(p);
  for (auto& v : p) v /= s;
  return p;
}

SimConfig mid_config() {
  SimConfig c;
  c.dt_nodes = 24;
  c.anomaly_nodes = 40;
  c.frame.total_res = 12;
  c.policy.fixed_push_slots = 6;
  c.episodes = 1;
  c.frames = 400;
  c.seed = 31;
  return c;
}

}  // namespace

TEST_CASE("beliefs stay normalized every frame") {
  for (auto pull : {PullPolicy::Pps, PullPolicy::Maf, PullPolicy::Cra}) {
    for (auto push : {PushPolicy::Pps, PushPolicy::Fsa, PushPolicy::Afsa, PushPolicy::Maf}) {
      SimConfig c = mid_config();
      c.policy.pull = pull;
      c.policy.push = push;
      c.anomaly_rate_hz = 6.0;
      const SimContext ctx(c);
      double worst = 0.0;
      run_episode(ctx, 0, [&](const Episode& ep, const FrameLog&) {
        auto check = [&](std::span<const double> pmf) {
          worst = std::max(worst, std::abs(total(pmf) - 1.0));
        };
        for (const auto& b : ep.drift_priors()) check(b.pmf);
        for (const auto& b : ep.drift_posteriors()) check(b.pmf);
        for (const auto& b : ep.anomaly_priors()) check(b.pmf());
        for (const auto& b : ep.anomaly_posteriors()) check(b.pmf());
      });
      CAPTURE(to_string(pull));
      CAPTURE(to_string(push));
      CHECK(worst <= 1e-9);
    }
  }
}

TEST_CASE("outcome likelihood equals slot enumeration when every collision is a pair") {
  for (std::size_t slots = 1; slots <= 5; ++slots) {
    for (std::size_t active = 0; active <= 6; ++active) {
      const auto dist = oracle::slot_outcomes(active, slots);
      for (std::size_t c = 0; 2 * c <= active; ++c) {
        const std::size_t s = active - 2 * c;
        if (s + c > slots) continue;
        const auto it = dist.find({s, c});
        const double want = it == dist.end() ? 0.0 : it->second;
        CAPTURE(slots);
        CAPTURE(active);
        CAPTURE(c);
        CHECK(outcome_likelihood(s, c, active, slots) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pulling one more sensor never loses information") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.01, 0.4);
  std::uniform_int_distribution<std::size_t> size(1, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = size(rng);
    std::vector<double> flips(c);
    for (auto& f : flips) f = u(rng);
    const auto model = make_binary_cluster(flips, 0.9, c);
    const DriftBelief prior{0, random_pmf(model.num_states(), rng)};
    std::vector<std::size_t> seen;
    for (std::size_t p = 0; p < c; ++p) {
      if (rng() % 2) seen.push_back(p);
    }
    for (std::size_t p = 0; p < c; ++p) {
      if (std::find(seen.begin(), seen.end(), p) != seen.end()) continue;
      worst = std::min(worst, information_gain(prior, model, seen, p));
    }
  }
  CHECK(worst >= -1e-12);
}

TEST_CASE("calibrated clusters enter drift at the requested rate") {
  BinaryMajorityScenario spec;
  spec.num_clusters = 1;
  for (double rate : {1.0, 3.0, 5.0}) {
    for (bool het : {true, false}) {
      spec.heterogeneity = het ? BinaryMajorityScenario::heterogeneous_default()
                               : BinaryMajorityScenario::homogeneous(4);
      spec.target_drift_rate_hz = rate;
      const auto model = build_binary_scenario(spec)[0];
      Rng rng(1000 + static_cast<std::uint64_t>(rate));
      constexpr std::size_t kFrames = 100000;
      std::size_t entries = 0;
      StateId y = model.initial_state();
      for (std::size_t k = 0; k < kFrames; ++k) {
        y = step_cluster(model, y, rng);
        if (model.is_drift(y)) {
          ++entries;
          y = model.initial_state();
        }
      }
      const double want = rate * spec.frame_duration_s;
      CAPTURE(rate);
      CAPTURE(het);
      CHECK(std::abs(static_cast<double>(entries) / kFrames - want) <= 0.1 * want);
    }
  }
}

TEST_CASE("a collision that cannot involve the node is a silent slot") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t cap = 5 + rng() % 40;
    const AnomalyBelief prior(0, random_pmf(cap + 1, rng), BeliefStage::Prior);
    const std::size_t threshold = rng() % cap;
    if (prior.mass_at_or_below(threshold) == 0.0) continue;
    const auto collided = anomaly_posterior_collision(prior, threshold, 0.0);
    const auto silent = anomaly_posterior_silent(prior, threshold);
    for (std::size_t t = 0; t <= cap; ++t) {
      CHECK(collided[t] == doctest::Approx(silent[t]).epsilon(1e-12));
    }
  }
}

TEST_CASE("replay under random configurations") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 6; ++trial) {
    SimConfig c = mid_config();
    c.frames = 120;
    c.policy.pull = static_cast<PullPolicy>(rng() % 3);
    c.policy.push = static_cast<PushPolicy>(rng() % 4);
    c.policy.alloc = static_cast<AllocPolicy>(rng() % 3);
    c.anomaly_rate_hz = 1.0 + static_cast<double>(rng() % 5);
    const std::uint64_t seed = rng();
    const SimContext ctx(c);
    auto trace = [&] {
      Episode ep(ctx, seed);
      std::vector<FrameLog> logs;
      for (std::size_t k = 0; k < c.frames; ++k) logs.push_back(ep.run_frame());
      return logs;
    };
    CHECK(trace() == trace());
  }
}

TEST_CASE("the chosen push threshold respects the collision cap") {
  for (double rate : {1.0, 3.0, 8.0}) {
    SimConfig c = mid_config();
    c.dt_nodes = 0;
    c.anomaly_rate_hz = rate;
    c.policy.fixed_push_slots = 4;
    c.frame.total_res = 4;
    const SimContext ctx(c);
    std::size_t frames = 0;
    std::size_t fallbacks = 0;
    run_episode(ctx, 0, [&](const Episode& ep, const FrameLog& log) {
      const auto priors = ep.anomaly_priors();
      const double p = push_collision_probability(priors, log.push_threshold, log.push_slots);
      ++frames;
      if (p <= c.frame.collision_cap + 1e-12) return;
      ++fallbacks;
      std::size_t highest = 0;
      for (const auto& b : priors) highest = std::max(highest, b.top());
      CHECK(log.push_threshold == (highest >= 2 ? highest - 2 : 0));
    });
    CHECK(frames == c.frames);
    CAPTURE(fallbacks);
  }
}

TEST_CASE("allocators stay within bounds and SSM moves one slot at a time") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t total_res = 4 + rng() % 30;
    const std::size_t r_min = 1 + rng() % (total_res / 2);
    const double a = u(rng) < 0.1 ? 0.0 : u(rng);
    const double b = u(rng) < 0.1 ? 0.0 : u(rng);
    const std::size_t r = rsm_allocate(a, b, total_res, r_min);
    CHECK(r >= r_min);
    CHECK(r <= total_res - r_min);
    const std::size_t next = ssm_allocate(r, a, b, 0.005, total_res, r_min);
    CHECK(next >= r_min);
    CHECK(next <= total_res - r_min);
    CHECK(std::max(next, r) - std::min(next, r) <= 1);
  }
}

TEST_CASE("AFSA stays inside its band") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double lo = u(rng) * 0.5;
    FsaState s{lo, lo, lo + u(rng) * 0.5};
    const std::size_t slots = 1 + rng() % 20;
    for (int k = 0; k < 100; ++k) {
      const std::size_t collided = rng() % (slots + 1);
      const std::size_t silent = rng() % (slots - collided + 1);
      s = afsa_update(s, collided, silent, slots, u(rng));
      CHECK(s.p_tx >= s.p_lo);
      CHECK(s.p_tx <= s.p_hi);
    }
  }
}

TEST_CASE("pulling every DT node every frame gives exact beliefs") {
  SimConfig c = mid_config();
  c.policy.fixed_push_slots = 4;
  c.frame.total_res = c.dt_nodes + 4;
  c.drift_rate_hz = 5.0;
  const SimContext ctx(c);
  std::size_t mismatches = 0;
  std::uint32_t worst_psi = 0;
  run_episode(ctx, 0, [&](const Episode& ep, const FrameLog& log) {
    const auto posts = ep.drift_posteriors();
    const auto truth = ep.cluster_states();
    for (std::size_t i = 0; i < posts.size(); ++i) {
      if (posts[i].pmf[truth[i]] != 1.0) ++mismatches;
    }
    for (auto v : log.psi) worst_psi = std::max(worst_psi, v);
  });
  CHECK(mismatches == 0);
  CHECK(worst_psi == 0);
}
