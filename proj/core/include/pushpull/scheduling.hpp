#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pushpull/model.hpp"
#include "pushpull/tracking.hpp"

namespace pushpull {

enum class PullPolicy { Pps, Maf, Cra };
enum class PushPolicy { Pps, Maf, Fsa, Afsa };
enum class AllocPolicy { Fixed, Rsm, Ssm };

std::string_view to_string(PullPolicy p);
std::string_view to_string(PushPolicy p);
std::string_view to_string(AllocPolicy p);
/// Throw ConfigError on unknown names.
PullPolicy parse_pull_policy(std::string_view name);
PushPolicy parse_push_policy(std::string_view name);
AllocPolicy parse_alloc_policy(std::string_view name);

struct FrameConfig {
  std::size_t total_res = 20;
  double frame_duration_s = 0.01;
  std::size_t r_min = 5;
  double collision_cap = 0.2;
  std::size_t aoii_risk_threshold = 2;
  double reset_confidence = 0.95;
  double hysteresis = 0.005;

  /// The 2 * r_min <= total_res bound only matters when an adaptive
  /// allocator moves the split.
  void validate(bool adaptive_allocation) const;

  bool operator==(const FrameConfig&) const = default;
};

struct FramePlan {
  std::size_t pull_slots = 0;
  std::size_t push_slots = 0;
  std::vector<NodeId> scheduled;
  std::size_t push_threshold = 0;
};

/// Binary Shannon entropy in bits.
double binary_entropy(double p);

/// Expected entropy of the drift risk after hearing from the cluster
/// positions in `scheduled`.
double expected_posterior_entropy(const DriftBelief& prior,
                                  const DriftClusterModel& model,
                                  std::span<const std::size_t> scheduled);

double information_gain(const DriftBelief& prior, const DriftClusterModel& model,
                        std::span<const std::size_t> scheduled,
                        std::size_t candidate);

/// Greedy information-gain schedule of `count` DT nodes. Ties go to the
/// lowest node id.
std::vector<NodeId> pps_pull_schedule(std::span<const DriftBelief> priors,
                                      std::span<const DriftClusterModel> models,
                                      const NetworkTopology& topology,
                                      std::size_t count);

/// Top `count` candidates by age (frames since last received report),
/// ties to the lowest id. `age` is indexed by node id.
std::vector<NodeId> maf_schedule(std::span<const NodeId> candidates,
                                 std::span<const std::uint32_t> age,
                                 std::size_t count);

/// Whole clusters by decreasing risk, then a random fill from the next one.
std::vector<NodeId> cra_pull_schedule(std::span<const double> risks,
                                      const NetworkTopology& topology,
                                      std::size_t count, Rng& rng);

/// Collision probability in a P-slot subframe when nodes above `threshold`
/// contend, using the binomial approximation of the active count.
double push_collision_probability(std::span<const AnomalyBelief> priors,
                                  std::size_t threshold, std::size_t slots);

/// Highest threshold (starting two below the largest possible AoII) whose
/// collision probability stays within `cap`.
std::size_t pps_push_threshold(std::span<const AnomalyBelief> priors,
                               std::size_t slots, double cap);

struct FsaParams {
  double target_load = 0.9;
  double adapt_step = 0.1;
  double min_load = 0.2;
  double max_load = 1.0;

  bool operator==(const FsaParams&) const = default;
};

/// Transmission probability that yields `load` expected transmitters per
/// slot when anomalies arrive at `anomaly_rate_hz` per node.
double fsa_p_tx(std::size_t slots, double load, std::size_t num_anomaly_nodes,
                double anomaly_rate_hz, double frame_s);

struct FsaState {
  double p_tx = 0.0;
  double p_lo = 0.0;
  double p_hi = 1.0;
};

FsaState afsa_update(const FsaState& state, std::size_t collided,
                     std::size_t silent, std::size_t slots, double step);

double drift_urgency(std::span<const double> risks);
double anomaly_urgency(std::span<const AnomalyBelief> posteriors,
                       std::size_t risk_threshold);

struct AllocationState {
  std::size_t push_slots = 0;
  double drift_urgency = 0.0;
  double anomaly_urgency = 0.0;
};

std::size_t rsm_allocate(double drift_urgency, double anomaly_urgency,
                         std::size_t total, std::size_t r_min);
std::size_t ssm_allocate(std::size_t current, double drift_urgency,
                         double anomaly_urgency, double hysteresis,
                         std::size_t total, std::size_t r_min);

}  // namespace pushpull
