#pragma once

// Independent reference computations used to check the library. Everything
// here is brute force on purpose and shares no code with core/.

#include <cmath>
#include <cstddef>
#include <map>
#include <utility>
#include <vector>

#include "pushpull/model.hpp"

namespace oracle {

/// Exact distribution of (successes, collided slots) when `active` nodes each
/// pick one of `slots` slots uniformly, by walking all slots^active choices.
inline std::map<std::pair<std::size_t, std::size_t>, double> slot_outcomes(
    std::size_t active, std::size_t slots) {
  std::map<std::pair<std::size_t, std::size_t>, double> dist;
  std::vector<std::size_t> pick(active, 0);
  std::size_t total = 1;
  for (std::size_t i = 0; i < active; ++i) total *= slots;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i < active; ++i) {
      pick[i] = rest % slots;
      rest /= slots;
    }
    std::vector<std::size_t> load(slots, 0);
    for (std::size_t p : pick) ++load[p];
    std::size_t s = 0, c = 0;
    for (std::size_t l : load) {
      if (l == 1) ++s;
      if (l >= 2) ++c;
    }
    dist[{s, c}] += 1.0 / static_cast<double>(total);
  }
  return dist;
}

inline double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Expected drift-risk entropy after observing `positions`, by enumerating
/// every joint symbol vector.
inline double expected_entropy(const std::vector<double>& prior,
                               const pushpull::DriftClusterModel& model,
                               const std::vector<std::size_t>& positions) {
  const auto& om = model.observations();
  std::vector<std::size_t> symbol(positions.size(), 0);
  double total = 0.0;
  for (;;) {
    double eta = 0.0, risky = 0.0;
    for (std::size_t y = 0; y < prior.size(); ++y) {
      double w = prior[y];
      for (std::size_t k = 0; k < positions.size(); ++k) {
        w *= om.prob(static_cast<pushpull::StateId>(y), positions[k], symbol[k]);
      }
      eta += w;
      if (model.is_drift(static_cast<pushpull::StateId>(y))) risky += w;
    }
    if (eta > 0.0) total += eta * binary_entropy(risky / eta);
    std::size_t k = 0;
    while (k < positions.size() && ++symbol[k] == om.alphabet(positions[k])) {
      symbol[k] = 0;
      ++k;
    }
    if (k == positions.size()) break;
  }
  return total;
}

/// Posterior over states given some observed (position, symbol) pairs.
inline std::vector<double> bayes(const std::vector<double>& prior,
                                 const pushpull::DriftClusterModel& model,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& seen) {
  std::vector<double> post(prior.size());
  double z = 0.0;
  for (std::size_t y = 0; y < prior.size(); ++y) {
    double w = prior[y];
    for (auto [pos, sym] : seen) {
      w *= model.observations().prob(static_cast<pushpull::StateId>(y), pos, sym);
    }
    post[y] = w;
    z += w;
  }
  for (double& v : post) v /= z;
  return post;
}

/// Mean frames to first reach the drift set from the initial state.
inline double simulated_absorption(const pushpull::DriftClusterModel& model,
                                   std::size_t runs, pushpull::Rng& rng) {
  double sum = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    pushpull::StateId y = model.initial_state();
    std::size_t t = 0;
    do {
      y = model.sample_next(y, rng);
      ++t;
    } while (!model.is_drift(y));
    sum += static_cast<double>(t);
  }
  return sum / static_cast<double>(runs);
}

}  // namespace oracle
