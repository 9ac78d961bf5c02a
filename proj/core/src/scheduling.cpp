#include "pushpull/scheduling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pushpull/errors.hpp"

namespace pushpull {

std::string_view to_string(PullPolicy p) {
  switch (p) {
    case PullPolicy::Pps: return "pps";
    case PullPolicy::Maf: return "maf";
    case PullPolicy::Cra: return "cra";
  }
  return "?";
}

std::string_view to_string(PushPolicy p) {
  switch (p) {
    case PushPolicy::Pps: return "pps";
    case PushPolicy::Maf: return "maf";
    case PushPolicy::Fsa: return "fsa";
    case PushPolicy::Afsa: return "afsa";
  }
  return "?";
}

std::string_view to_string(AllocPolicy p) {
  switch (p) {
    case AllocPolicy::Fixed: return "fixed";
    case AllocPolicy::Rsm: return "rsm";
    case AllocPolicy::Ssm: return "ssm";
  }
  return "?";
}

PullPolicy parse_pull_policy(std::string_view name) {
  if (name == "pps") return PullPolicy::Pps;
  if (name == "maf") return PullPolicy::Maf;
  if (name == "cra") return PullPolicy::Cra;
  throw ConfigError("unknown pull policy '" + std::string(name) + "' (pps, maf, cra)");
}

PushPolicy parse_push_policy(std::string_view name) {
  if (name == "pps") return PushPolicy::Pps;
  if (name == "maf") return PushPolicy::Maf;
  if (name == "fsa") return PushPolicy::Fsa;
  if (name == "afsa") return PushPolicy::Afsa;
  throw ConfigError("unknown push policy '" + std::string(name) + "' (pps, maf, fsa, afsa)");
}

AllocPolicy parse_alloc_policy(std::string_view name) {
  if (name == "fixed") return AllocPolicy::Fixed;
  if (name == "rsm") return AllocPolicy::Rsm;
  if (name == "ssm") return AllocPolicy::Ssm;
  throw ConfigError("unknown allocator '" + std::string(name) + "' (fixed, rsm, ssm)");
}

void FrameConfig::validate(bool adaptive_allocation) const {
  if (total_res == 0) throw ConfigError("R must be positive");
  if (!(frame_duration_s > 0.0)) throw ConfigError("T must be positive");
  if (adaptive_allocation && 2 * r_min > total_res) {
    throw ConfigError("R_min must not exceed R/2");
  }
  if (!(collision_cap > 0.0 && collision_cap < 1.0)) {
    throw ConfigError("sigma must lie in (0, 1)");
  }
  if (!(reset_confidence > 0.0 && reset_confidence < 1.0)) {
    throw ConfigError("nu_reset must lie in (0, 1)");
  }
  if (!(hysteresis >= 0.0)) throw ConfigError("eta_hys must be non-negative");
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

namespace {

// Accumulates, per joint outcome of the scheduled positions, the total
// mass and the drift mass. Entropy is then sum_o mass(o) * h(drift/mass).
double entropy_from_buckets(std::span<const double> mass,
                            std::span<const double> drift) {
  double h = 0.0;
  for (std::size_t k = 0; k < mass.size(); ++k) {
    if (mass[k] > 0.0) h += mass[k] * binary_entropy(drift[k] / mass[k]);
  }
  return h;
}

}  // namespace

double expected_posterior_entropy(const DriftBelief& prior,
                                  const DriftClusterModel& model,
                                  std::span<const std::size_t> scheduled) {
  const auto& om = model.observations();
  const std::size_t n = model.num_states();
  std::size_t outcomes = 1;
  for (std::size_t pos : scheduled) {
    if (pos >= om.num_positions()) throw ContractViolation("position outside the cluster");
    outcomes *= om.alphabet(pos);
  }
  std::vector<double> mass(outcomes, 0.0);
  std::vector<double> drift(outcomes, 0.0);

  if (om.deterministic()) {
    for (std::size_t y = 0; y < n; ++y) {
      const double w = prior.pmf[y];
      if (w == 0.0) continue;
      std::size_t key = 0;
      for (std::size_t pos : scheduled) {
        std::size_t sym = 0;
        while (om.prob(static_cast<StateId>(y), pos, sym) == 0.0) ++sym;
        key = key * om.alphabet(pos) + sym;
      }
      mass[key] += w;
      if (model.is_drift(static_cast<StateId>(y))) drift[key] += w;
    }
    return entropy_from_buckets(mass, drift);
  }

  std::vector<std::size_t> digits(scheduled.size(), 0);
  for (std::size_t key = 0; key < outcomes; ++key) {
    std::size_t rest = key;
    for (std::size_t i = scheduled.size(); i-- > 0;) {
      digits[i] = rest % om.alphabet(scheduled[i]);
      rest /= om.alphabet(scheduled[i]);
    }
    for (std::size_t y = 0; y < n; ++y) {
      double w = prior.pmf[y];
      for (std::size_t i = 0; i < scheduled.size() && w > 0.0; ++i) {
        w *= om.prob(static_cast<StateId>(y), scheduled[i], digits[i]);
      }
      if (w == 0.0) continue;
      mass[key] += w;
      if (model.is_drift(static_cast<StateId>(y))) drift[key] += w;
    }
  }
  return entropy_from_buckets(mass, drift);
}

double information_gain(const DriftBelief& prior, const DriftClusterModel& model,
                        std::span<const std::size_t> scheduled,
                        std::size_t candidate) {
  if (std::find(scheduled.begin(), scheduled.end(), candidate) != scheduled.end()) {
    throw ContractViolation("candidate already scheduled");
  }
  std::vector<std::size_t> extended(scheduled.begin(), scheduled.end());
  extended.push_back(candidate);
  return expected_posterior_entropy(prior, model, scheduled) -
         expected_posterior_entropy(prior, model, extended);
}

std::vector<NodeId> pps_pull_schedule(std::span<const DriftBelief> priors,
                                      std::span<const DriftClusterModel> models,
                                      const NetworkTopology& topology,
                                      std::size_t count) {
  const std::size_t num_clusters = topology.clusters.size();
  if (priors.size() != num_clusters || models.size() != num_clusters) {
    throw ContractViolation("one prior and one model per cluster");
  }
  if (count > topology.dt_nodes.size()) {
    throw ContractViolation("more pull slots than DT nodes");
  }
  std::vector<std::vector<std::size_t>> chosen(num_clusters);
  std::vector<double> base(num_clusters);
  for (std::size_t i = 0; i < num_clusters; ++i) {
    base[i] = expected_posterior_entropy(priors[i], models[i], {});
  }

  // gain[i][pos], NaN once scheduled.
  std::vector<std::vector<double>> gain(num_clusters);
  auto refresh = [&](std::size_t i) {
    const auto& members = topology.clusters[i];
    gain[i].resize(members.size());
    std::vector<std::size_t> trial = chosen[i];
    trial.push_back(0);
    for (std::size_t pos = 0; pos < members.size(); ++pos) {
      if (std::find(chosen[i].begin(), chosen[i].end(), pos) != chosen[i].end()) {
        gain[i][pos] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      trial.back() = pos;
      gain[i][pos] = base[i] - expected_posterior_entropy(priors[i], models[i], trial);
    }
  };
  for (std::size_t i = 0; i < num_clusters; ++i) refresh(i);

  constexpr double kTie = 1e-12;
  std::vector<NodeId> out;
  out.reserve(count);
  while (out.size() < count) {
    double best = -std::numeric_limits<double>::infinity();
    NodeId best_node = 0;
    std::size_t best_cluster = 0;
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i < num_clusters; ++i) {
      const auto& members = topology.clusters[i];
      for (std::size_t pos = 0; pos < members.size(); ++pos) {
        const double g = gain[i][pos];
        if (std::isnan(g)) continue;
        const NodeId id = members[pos];
        if (g > best + kTie || (g >= best - kTie && id < best_node)) {
          best = std::max(best, g);
          best_node = id;
          best_cluster = i;
          best_pos = pos;
        }
      }
    }
    out.push_back(best_node);
    chosen[best_cluster].push_back(best_pos);
    base[best_cluster] =
        expected_posterior_entropy(priors[best_cluster], models[best_cluster],
                                   chosen[best_cluster]);
    refresh(best_cluster);
  }
  return out;
}

std::vector<NodeId> maf_schedule(std::span<const NodeId> candidates,
                                 std::span<const std::uint32_t> age,
                                 std::size_t count) {
  std::vector<NodeId> order(candidates.begin(), candidates.end());
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                    order.end(), [&](NodeId a, NodeId b) {
                      if (age[a] != age[b]) return age[a] > age[b];
                      return a < b;
                    });
  order.resize(count);
  return order;
}

std::vector<NodeId> cra_pull_schedule(std::span<const double> risks,
                                      const NetworkTopology& topology,
                                      std::size_t count, Rng& rng) {
  if (risks.size() != topology.clusters.size()) {
    throw ContractViolation("one risk per cluster");
  }
  if (count > topology.dt_nodes.size()) {
    throw ContractViolation("more pull slots than DT nodes");
  }
  std::vector<std::size_t> order(risks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return risks[a] > risks[b]; });
  std::vector<NodeId> out;
  out.reserve(count);
  for (std::size_t i : order) {
    const auto& members = topology.clusters[i];
    const std::size_t left = count - out.size();
    if (left == 0) break;
    if (left >= members.size()) {
      out.insert(out.end(), members.begin(), members.end());
      continue;
    }
    std::vector<NodeId> pool = members;
    for (std::size_t k = 0; k < left; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
      out.push_back(pool[k]);
    }
    break;
  }
  return out;
}

namespace {

// Probability that a uniform placement of `active` nodes on `slots` slots
// has no shared slot: P! / (P^a (P-a)!).
double no_collision_probability(std::size_t active, std::size_t slots) {
  if (active > slots) return 0.0;
  double p = 1.0;
  for (std::size_t i = 1; i < active; ++i) {
    p *= static_cast<double>(slots - i) / static_cast<double>(slots);
  }
  return p;
}

}  // namespace

double push_collision_probability(std::span<const AnomalyBelief> priors,
                                  std::size_t threshold, std::size_t slots) {
  if (slots == 0) throw ContractViolation("push subframe needs at least one slot");
  const ActivationStats st = activation_stats(priors, threshold);
  const auto count_pmf = active_count_prior(st.potentially_active, st.mean_alpha);
  double p = 0.0;
  for (std::size_t a = 2; a < count_pmf.size(); ++a) {
    p += count_pmf[a] * (1.0 - no_collision_probability(a, slots));
  }
  return p;
}

std::size_t pps_push_threshold(std::span<const AnomalyBelief> priors,
                               std::size_t slots, double cap) {
  if (slots == 0) throw ContractViolation("push subframe needs at least one slot");
  std::size_t highest = 0;
  for (const auto& b : priors) highest = std::max(highest, b.top());
  if (highest < 2) return 0;
  for (std::size_t theta = highest - 2;; --theta) {
    if (push_collision_probability(priors, theta, slots) <= cap) return theta;
    if (theta == 0) break;
  }
  return highest - 2;
}

double fsa_p_tx(std::size_t slots, double load, std::size_t num_anomaly_nodes,
                double anomaly_rate_hz, double frame_s) {
  if (num_anomaly_nodes == 0 || !(anomaly_rate_hz > 0.0) || !(frame_s > 0.0)) {
    throw ContractViolation("FSA tuning needs anomaly nodes and a positive rate");
  }
  const double arrivals_per_frame =
      static_cast<double>(num_anomaly_nodes) * anomaly_rate_hz * frame_s;
  return std::clamp(static_cast<double>(slots) * load / arrivals_per_frame, 0.0, 1.0);
}

FsaState afsa_update(const FsaState& state, std::size_t collided,
                     std::size_t silent, std::size_t slots, double step) {
  if (collided + silent > slots) throw ContractViolation("more outcomes than slots");
  FsaState next = state;
  next.p_tx += step * (static_cast<double>(collided) - static_cast<double>(silent)) /
               static_cast<double>(slots);
  next.p_tx = std::clamp(next.p_tx, state.p_lo, state.p_hi);
  return next;
}

double drift_urgency(std::span<const double> risks) {
  if (risks.empty()) return 0.0;
  return std::accumulate(risks.begin(), risks.end(), 0.0) /
         static_cast<double>(risks.size());
}

double anomaly_urgency(std::span<const AnomalyBelief> posteriors,
                       std::size_t risk_threshold) {
  if (posteriors.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& b : posteriors) sum += b.mass_above(risk_threshold);
  return sum / static_cast<double>(posteriors.size());
}

namespace {

std::size_t clamp_split(std::size_t p, std::size_t total, std::size_t r_min) {
  return std::clamp(p, r_min, total - r_min);
}

}  // namespace

std::size_t rsm_allocate(double drift_urgency, double anomaly_urgency,
                         std::size_t total, std::size_t r_min) {
  if (2 * r_min > total) throw ContractViolation("R_min exceeds R/2");
  const double denom = anomaly_urgency + drift_urgency;
  std::size_t raw = total / 2;
  if (denom > 0.0) {
    raw = static_cast<std::size_t>(
        std::floor(static_cast<double>(total) * anomaly_urgency / denom));
  }
  return clamp_split(raw, total, r_min);
}

std::size_t ssm_allocate(std::size_t current, double drift_urgency,
                         double anomaly_urgency, double hysteresis,
                         std::size_t total, std::size_t r_min) {
  if (2 * r_min > total) throw ContractViolation("R_min exceeds R/2");
  std::size_t next = clamp_split(current, total, r_min);
  if (anomaly_urgency - drift_urgency > hysteresis) {
    ++next;
  } else if (drift_urgency - anomaly_urgency > hysteresis && next > 0) {
    --next;
  }
  return clamp_split(next, total, r_min);
}

}  // namespace pushpull
