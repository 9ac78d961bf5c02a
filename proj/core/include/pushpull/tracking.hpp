#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pushpull/model.hpp"

namespace pushpull {

enum class BeliefStage { Prior, Posterior };

/// PMF over one cluster's hidden states.
struct DriftBelief {
  std::size_t cluster = 0;
  std::vector<double> pmf;
  BeliefStage stage = BeliefStage::Posterior;

  static DriftBelief point_mass(std::size_t cluster, std::size_t num_states,
                                StateId state);
};

/// One received symbol per cluster position; std::nullopt marks an erasure
/// (no packet from that sensor this frame).
using PartialObservation = std::vector<std::optional<std::uint32_t>>;

DriftBelief drift_prior(const DriftBelief& posterior,
                        const DriftClusterModel& model);

/// States whose error-free observation agrees with every received symbol.
/// Requires a deterministic observation model.
std::vector<StateId> compatible_states(const DriftClusterModel& model,
                                       const PartialObservation& obs);

/// Every complete observation vector that agrees with the received symbols
/// (erased positions range over their whole alphabet).
std::vector<std::vector<std::uint32_t>> compatible_observations(
    const DriftClusterModel& model, const PartialObservation& obs);

/// Bayes update with the observation likelihood marginalized over erasures.
/// Throws InconsistencyError when the observation has zero probability.
DriftBelief drift_posterior(const DriftBelief& prior,
                            const DriftClusterModel& model,
                            const PartialObservation& obs);

/// Probability mass on the drift set.
double drift_risk(const DriftBelief& belief, const DriftClusterModel& model);

/// PMF over a node's anomaly AoII, truncated at `cap` frames. Mass that
/// would move past the cap accumulates in the top bin.
class AnomalyBelief {
 public:
  AnomalyBelief() = default;
  AnomalyBelief(NodeId node, std::vector<double> pmf,
                BeliefStage stage = BeliefStage::Posterior);

  /// Point mass at AoII zero.
  static AnomalyBelief zero(NodeId node, std::size_t cap,
                            BeliefStage stage = BeliefStage::Posterior);

  NodeId node() const { return node_; }
  BeliefStage stage() const { return stage_; }
  std::size_t cap() const { return pmf_.size() - 1; }
  /// Largest AoII value with positive mass.
  std::size_t top() const { return top_; }
  std::span<const double> pmf() const { return pmf_; }
  double operator[](std::size_t theta) const { return pmf_[theta]; }

  double mass_at_or_below(std::size_t theta) const;
  double mass_above(std::size_t theta) const;

 private:
  friend AnomalyBelief anomaly_prior(const AnomalyBelief&, double, double, bool);
  friend AnomalyBelief anomaly_posterior_silent(const AnomalyBelief&, std::size_t);
  friend AnomalyBelief anomaly_posterior_collision(const AnomalyBelief&,
                                                   std::size_t, double);
  void refresh_top(std::size_t from);

  NodeId node_ = 0;
  std::vector<double> pmf_{1.0};
  BeliefStage stage_ = BeliefStage::Posterior;
  std::size_t top_ = 0;
};

/// One-frame prediction. A node pulled this frame reports its anomaly
/// flag, so its AoII is known to be reset.
AnomalyBelief anomaly_prior(const AnomalyBelief& posterior, double lambda,
                            double mu, bool scheduled_in_pull);

/// Case 1: the node's packet was received.
AnomalyBelief anomaly_posterior_success(NodeId node, std::size_t cap);

/// Case 2: no collision and no packet from this node, so AoII <= threshold.
AnomalyBelief anomaly_posterior_silent(const AnomalyBelief& prior,
                                       std::size_t threshold);

struct ActivationStats {
  std::vector<double> alpha;       ///< per-belief transmission probability
  std::size_t potentially_active;  ///< beliefs with alpha > 0
  double mean_alpha;               ///< average over the potentially active
};

ActivationStats activation_stats(std::span<const AnomalyBelief> priors,
                                 std::size_t threshold);

/// Binomial(A, mean_alpha) over the number of active nodes.
std::vector<double> active_count_prior(std::size_t potentially_active,
                                       double mean_alpha);

/// Pr(s successes, c collisions | a active nodes, P slots) with every
/// collision involving two or three nodes. Equals exact slot-assignment
/// enumeration whenever a = s + 2c.
double outcome_likelihood(std::size_t successes, std::size_t collisions,
                          std::size_t active, std::size_t slots);

/// The literal closed form multinomial(a; s, c, c, a-s-2c) * P! /
/// ((P-s-c)! c! P^a 2^c 3^(a-s-2c)). Kept for comparison with
/// outcome_likelihood; for a = s + 2c it is smaller than enumeration by a
/// factor (c!)^2, so the two agree only when c <= 1.
double printed_outcome_likelihood(std::size_t successes,
                                  std::size_t collisions, std::size_t active,
                                  std::size_t slots);

/// Pr(a | s, c) proportional to prior(a) * Pr(s, c | a).
/// Throws InconsistencyError if no feasible a has positive weight.
std::vector<double> active_count_posterior(std::span<const double> prior,
                                           std::size_t successes,
                                           std::size_t collisions,
                                           std::size_t slots);

/// Probability that a given potentially active, unsuccessful node collided.
double collider_probability(std::span<const double> posterior,
                            std::size_t successes,
                            std::size_t potentially_active);

/// Case 3: reweights the mass at or below the threshold to 1 - p_chi and
/// the mass above it to p_chi.
AnomalyBelief anomaly_posterior_collision(const AnomalyBelief& prior,
                                          std::size_t threshold, double p_chi);

/// Outcome of one push slot.
struct SlotOutcome {
  enum class Kind : std::uint8_t { Empty, Collision, Success };
  Kind kind = Kind::Empty;
  NodeId node = 0;  ///< valid when kind == Success

  /// 0 empty, -1 collision, node id + 1 for a success.
  std::int64_t encode() const;
};

struct PushOutcome {
  std::vector<SlotOutcome> slots;
  std::size_t successes = 0;
  std::size_t collisions = 0;

  /// Builds the outcome from each transmitter's chosen slot.
  static PushOutcome from_choices(std::size_t num_slots,
                                  std::span<const NodeId> transmitters,
                                  std::span<const std::size_t> chosen_slots);

  std::size_t empty() const { return slots.size() - successes - collisions; }
  bool succeeded(NodeId node) const;
  /// Throws ContractViolation when counts disagree with the slot vector.
  void validate() const;
};

}  // namespace pushpull
