#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pushpull/model.hpp"
#include "pushpull/scheduling.hpp"
#include "pushpull/tracking.hpp"

namespace pushpull {

struct PolicyConfig {
  PullPolicy pull = PullPolicy::Pps;
  PushPolicy push = PushPolicy::Pps;
  AllocPolicy alloc = AllocPolicy::Fixed;
  /// Push slots under the fixed allocator; pull gets the rest of R.
  std::size_t fixed_push_slots = 10;

  bool operator==(const PolicyConfig&) const = default;
};

struct SimConfig {
  /// "het" or "hom"; selects the default heterogeneity vector.
  std::string scenario = "het";
  std::size_t dt_nodes = 80;
  std::size_t anomaly_nodes = 100;
  std::size_t cluster_size = 4;
  /// Overrides the scenario's flip-up ratios when non-empty.
  std::vector<double> heterogeneity;
  double stay_one = 0.9;
  double drift_rate_hz = 3.0;
  double anomaly_rate_hz = 3.0;
  double anomaly_resolution = 0.0;
  std::size_t aoii_cap = 100;

  FrameConfig frame;
  FsaParams fsa;
  std::optional<double> fsa_p_tx_override;
  PolicyConfig policy;

  std::size_t episodes = 100;
  std::size_t frames = 1000;
  std::uint64_t seed = 1;

  bool adaptive() const { return policy.alloc != AllocPolicy::Fixed; }
  /// Throws ConfigError.
  void validate() const;

  bool operator==(const SimConfig&) const = default;
};

/// Per-frame trace, for verbose output and replay checks.
struct FrameLog {
  std::size_t frame = 0;
  std::size_t pull_slots = 0;
  std::size_t push_slots = 0;
  std::vector<NodeId> scheduled;
  std::size_t push_threshold = 0;
  std::vector<std::int64_t> slots;  ///< SlotOutcome::encode per push slot
  std::vector<std::size_t> resets;
  std::vector<std::uint32_t> psi;    ///< per cluster, frames
  std::vector<std::uint32_t> theta;  ///< per anomaly node, frames

  bool operator==(const FrameLog&) const = default;
};

/// Integer-valued sample histogram.
class AgeHistogram {
 public:
  void add(std::uint32_t value, std::uint64_t times = 1);
  void merge(const AgeHistogram& other);
  std::uint64_t count() const { return count_; }
  double mean() const;
  /// Nearest-rank percentile, q in (0, 1].
  std::uint32_t percentile(double q) const;
  const std::vector<std::uint64_t>& bins() const { return bins_; }

 private:
  std::vector<std::uint64_t> bins_;
  std::uint64_t count_ = 0;
  long double sum_ = 0;
};

struct MetricsLedger {
  AgeHistogram psi;
  AgeHistogram theta;
  std::uint64_t frames = 0;
  std::uint64_t push_slot_total = 0;
  std::uint64_t collided_slots = 0;
  std::uint64_t success_slots = 0;
  std::uint64_t empty_slots = 0;
  std::uint64_t resets = 0;
  std::uint64_t anomalies_generated = 0;
  std::uint64_t resolved_by_push = 0;
  std::uint64_t resolved_by_pull = 0;
  std::uint64_t still_active = 0;
  /// Collision frames whose outcome exceeded the three-per-slot model.
  std::uint64_t activity_fallbacks = 0;

  void merge(const MetricsLedger& other);
};

struct Summary {
  double psi_avg_ms = 0.0;
  double psi_p99_ms = 0.0;
  double theta_avg_ms = 0.0;
  double theta_p99_ms = 0.0;
  double mean_push_res = 0.0;
  double collision_rate = 0.0;
  MetricsLedger ledger;
};

Summary summarize(const MetricsLedger& ledger, double frame_s);

/// Immutable per-configuration data shared by every episode: topology,
/// calibrated cluster models and anomaly rates.
class SimContext {
 public:
  explicit SimContext(SimConfig config);

  const SimConfig& config() const { return config_; }
  const NetworkTopology& topology() const { return topology_; }
  std::span<const DriftClusterModel> models() const { return models_; }
  double anomaly_rate_per_frame() const { return lambda_; }

 private:
  SimConfig config_;
  NetworkTopology topology_;
  std::vector<DriftClusterModel> models_;
  double lambda_ = 0.0;
};

/// One Monte Carlo episode. Strictly sequential; the world advances at the
/// start of each frame using the previous frame's report indicators.
class Episode {
 public:
  Episode(const SimContext& context, std::uint64_t seed);

  /// Runs one frame and records its samples in the ledger.
  FrameLog run_frame();
  /// Finishes the episode (tallies still-active anomalies).
  const MetricsLedger& finish();

  std::size_t frame() const { return frame_; }
  const MetricsLedger& ledger() const { return ledger_; }
  std::span<const DriftBelief> drift_priors() const { return drift_prior_; }
  std::span<const DriftBelief> drift_posteriors() const { return drift_post_; }
  std::span<const AnomalyBelief> anomaly_priors() const { return anomaly_prior_; }
  std::span<const AnomalyBelief> anomaly_posteriors() const { return anomaly_post_; }
  std::span<const StateId> cluster_states() const { return cluster_state_; }
  const AnomalyProcess& anomalies() const { return anomalies_; }
  std::size_t push_slots() const { return alloc_.push_slots; }
  double fsa_p_tx() const { return fsa_.p_tx; }

 private:
  std::size_t allocate();
  std::vector<NodeId> schedule_pull(std::size_t count);
  std::uint32_t sample_symbol(const ObservationModel& om, StateId y,
                              std::size_t pos);
  void update_anomaly_beliefs_pps(const PushOutcome& outcome,
                                  std::size_t threshold,
                                  std::span<const std::uint8_t> pulled,
                                  std::span<const std::uint8_t> pushed);

  const SimContext& ctx_;
  Rng rng_;
  std::size_t frame_ = 0;

  std::vector<StateId> cluster_state_;
  std::vector<std::uint32_t> psi_;
  AnomalyProcess anomalies_;
  std::vector<std::uint8_t> reported_;  ///< per node id, last frame
  std::vector<std::uint32_t> age_;      ///< per node id, frames since report

  std::vector<DriftBelief> drift_prior_;
  std::vector<DriftBelief> drift_post_;
  std::vector<AnomalyBelief> anomaly_prior_;
  std::vector<AnomalyBelief> anomaly_post_;

  AllocationState alloc_;
  FsaState fsa_;
  MetricsLedger ledger_;
};

using FrameObserver = std::function<void(const Episode&, const FrameLog&)>;

/// Runs every frame of one episode. The seed is derived from the master
/// seed and the episode index.
MetricsLedger run_episode(const SimContext& context, std::size_t episode,
                          const FrameObserver& observer = {});

std::uint64_t episode_seed(std::uint64_t master, std::size_t episode);

/// Runs all episodes, on up to `workers` threads, and pools the samples.
Summary run_monte_carlo(const SimContext& context, std::size_t workers = 1,
                        const FrameObserver& first_episode_observer = {});

}  // namespace pushpull
