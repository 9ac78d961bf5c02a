#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace pushpull {

using NodeId = std::uint32_t;
using StateId = std::uint32_t;
using Rng = std::mt19937_64;

/// Uniform draw in [0, 1).
double uniform01(Rng& rng);

/// Sensor population: DT clusters over N_d, anomaly reporters N_a.
struct NetworkTopology {
  std::size_t num_nodes = 0;
  std::vector<NodeId> dt_nodes;
  std::vector<NodeId> anomaly_nodes;
  std::vector<std::vector<NodeId>> clusters;
  std::size_t cluster_size = 0;

  /// Clusters take node ids 0..D*C-1 in order; anomaly nodes are the first
  /// `num_anomaly_nodes` ids, so DT nodes are also anomaly reporters
  /// whenever num_anomaly_nodes >= D*C.
  static NetworkTopology make(std::size_t num_clusters,
                              std::size_t cluster_size,
                              std::size_t num_anomaly_nodes);

  /// Throws ContractViolation if clusters overlap, miss N_d, or have
  /// uneven sizes.
  void validate() const;

  /// Cluster index of a DT node, or -1.
  int cluster_of(NodeId node) const;
  /// Position of a DT node inside its cluster.
  std::size_t position_in_cluster(NodeId node) const;

 private:
  std::vector<int> cluster_index_;
  std::vector<std::size_t> position_;
  void build_index();
};

/// Factorized observation model: each cluster position reports one symbol
/// from its own alphabet, drawn from a per-state distribution.
class ObservationModel {
 public:
  ObservationModel() = default;
  /// `probs[y][pos][o]` flattened; alphabet sizes per position.
  ObservationModel(std::size_t num_states, std::vector<std::size_t> alphabet,
                   std::vector<double> probs);

  /// Position p observes bit p of the state id without error.
  static ObservationModel binary_error_free(std::size_t cluster_size);

  std::size_t num_positions() const { return alphabet_.size(); }
  std::size_t alphabet(std::size_t pos) const { return alphabet_[pos]; }
  double prob(StateId y, std::size_t pos, std::size_t symbol) const {
    return probs_[offset(y, pos) + symbol];
  }
  /// True when every per-state, per-position distribution is a point mass.
  bool deterministic() const { return deterministic_; }

 private:
  std::size_t offset(StateId y, std::size_t pos) const {
    return y * stride_ + pos_offset_[pos];
  }

  std::vector<std::size_t> alphabet_;
  std::vector<std::size_t> pos_offset_;
  std::size_t stride_ = 0;
  std::vector<double> probs_;
  bool deterministic_ = false;
};

/// One cluster's hidden Markov model.
class DriftClusterModel {
 public:
  DriftClusterModel(std::size_t num_states, StateId initial_state,
                    std::vector<double> transition, std::vector<bool> drift,
                    ObservationModel observations);

  std::size_t num_states() const { return num_states_; }
  std::size_t cluster_size() const { return observations_.num_positions(); }
  StateId initial_state() const { return initial_; }
  double transition(StateId from, StateId to) const {
    return transition_[from * num_states_ + to];
  }
  std::span<const double> transition_row(StateId from) const {
    return {transition_.data() + from * num_states_, num_states_};
  }
  bool is_drift(StateId y) const { return drift_[y]; }
  const std::vector<bool>& drift_mask() const { return drift_; }
  const ObservationModel& observations() const { return observations_; }

  /// Samples a successor using the cumulative row.
  StateId sample_next(StateId from, Rng& rng) const;

 private:
  std::size_t num_states_;
  StateId initial_;
  std::vector<double> transition_;
  std::vector<double> cumulative_;
  std::vector<bool> drift_;
  ObservationModel observations_;
};

StateId step_cluster(const DriftClusterModel& model, StateId state, Rng& rng);

/// Per-node two-state anomaly chains with reset-on-report.
class AnomalyProcess {
 public:
  AnomalyProcess(std::size_t num_nodes, std::vector<NodeId> nodes,
                 std::vector<double> lambda, std::vector<double> mu);

  const std::vector<NodeId>& nodes() const { return nodes_; }
  bool tracks(NodeId node) const {
    return node < index_.size() && index_[node] >= 0;
  }
  double lambda(NodeId node) const { return lambda_[slot(node)]; }
  double mu(NodeId node) const { return mu_[slot(node)]; }
  bool active(NodeId node) const { return active_[slot(node)] != 0; }
  std::uint32_t aoii(NodeId node) const { return aoii_[slot(node)]; }

  struct Step {
    bool active;
    std::uint32_t aoii;
  };
  Step step(NodeId node, bool resolved, Rng& rng);

  /// Cumulative count of 0 -> 1 transitions.
  std::uint64_t generated() const { return generated_; }

 private:
  std::size_t slot(NodeId node) const;

  std::vector<NodeId> nodes_;
  std::vector<int> index_;
  std::vector<double> lambda_;
  std::vector<double> mu_;
  std::vector<std::uint8_t> active_;
  std::vector<std::uint32_t> aoii_;
  std::uint64_t generated_ = 0;
};

/// Advances one node's anomaly chain; `resolved` is whether the node's
/// anomaly was reported during the frame that just ended.
AnomalyProcess::Step step_anomaly(AnomalyProcess& proc, NodeId node,
                                  bool resolved, Rng& rng);

/// Binary per-sensor states with a majority drift set.
struct BinaryMajorityScenario {
  std::size_t num_clusters = 20;
  std::size_t cluster_size = 4;
  std::vector<double> heterogeneity{1.0, 1.0, 1.0, 1.0};
  double stay_one = 0.9;
  double target_drift_rate_hz = 3.0;
  double frame_duration_s = 0.01;

  static std::vector<double> homogeneous(std::size_t cluster_size);
  /// (1, 7, 7.25, 7.5) for C = 4.
  static std::vector<double> heterogeneous_default();
};

/// Majority rule: drift iff at least C/2 positions are at 1.
bool is_majority_drift(StateId y, std::size_t cluster_size);

/// Transition matrix of the binary scenario for the given flip-up vector.
/// Inside the drift set, 1-components are frozen.
std::vector<double> binary_transition_matrix(std::span<const double> flip_up,
                                             double stay_one,
                                             std::size_t cluster_size);

DriftClusterModel make_binary_cluster(std::span<const double> flip_up,
                                      double stay_one,
                                      std::size_t cluster_size);

/// Expected frames to reach the drift set from the initial state, with all
/// drift states absorbing. Solves (I - Q) t = 1 over transient states.
double expected_absorption_time(const DriftClusterModel& model);

/// Scales `base_u` by one scalar so that the expected absorption time equals
/// 1 / (rate_hz * frame_s) frames.
std::vector<double> calibrate_drift_rate(std::span<const double> base_u,
                                         double stay_one,
                                         std::size_t cluster_size,
                                         double rate_hz, double frame_s);

std::vector<DriftClusterModel> build_binary_scenario(
    const BinaryMajorityScenario& spec);

}  // namespace pushpull
