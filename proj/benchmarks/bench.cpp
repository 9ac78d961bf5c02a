#include <benchmark/benchmark.h>

#include <vector>

#include "pushpull/engine.hpp"
#include "pushpull/scheduling.hpp"

using namespace pushpull;

namespace {

void BM_ExpectedEntropy(benchmark::State& state) {
  BinaryMajorityScenario spec;
  spec.num_clusters = 1;
  const auto model = build_binary_scenario(spec)[0];
  DriftBelief belief = DriftBelief::point_mass(0, model.num_states(), 0);
  for (int i = 0; i < 3; ++i) belief = drift_prior(belief, model);
  std::vector<std::size_t> seen;
  for (std::size_t p = 0; p < static_cast<std::size_t>(state.range(0)); ++p) seen.push_back(p);
  for (auto _ : state) {
    benchmark::DoNotOptimize(expected_posterior_entropy(belief, model, seen));
  }
}
BENCHMARK(BM_ExpectedEntropy)->DenseRange(0, 3);

void BM_PpsPullSchedule(benchmark::State& state) {
  BinaryMajorityScenario spec;
  const auto models = build_binary_scenario(spec);
  const auto topo = NetworkTopology::make(spec.num_clusters, spec.cluster_size, 100);
  std::vector<DriftBelief> priors;
  for (std::size_t i = 0; i < models.size(); ++i) {
    DriftBelief b = DriftBelief::point_mass(i, models[i].num_states(), 0);
    for (std::size_t k = 0; k <= i % 4; ++k) b = drift_prior(b, models[i]);
    priors.push_back(std::move(b));
  }
  const auto q = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(pps_pull_schedule(priors, models, topo, q));
  }
}
BENCHMARK(BM_PpsPullSchedule)->Arg(5)->Arg(10)->Arg(15);

void BM_RunFrame(benchmark::State& state) {
  SimConfig c;
  c.policy.alloc = static_cast<AllocPolicy>(state.range(0));
  const SimContext ctx(c);
  Episode ep(ctx, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ep.run_frame());
  }
}
BENCHMARK(BM_RunFrame)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
