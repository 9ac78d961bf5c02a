#include "pushpull/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "pushpull/errors.hpp"

namespace pushpull {

double uniform01(Rng& rng) {
  // 53 random mantissa bits.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// NetworkTopology

NetworkTopology NetworkTopology::make(std::size_t num_clusters,
                                      std::size_t cluster_size,
                                      std::size_t num_anomaly_nodes) {
  NetworkTopology topo;
  topo.cluster_size = cluster_size;
  const std::size_t num_dt = num_clusters * cluster_size;
  topo.num_nodes = std::max(num_dt, num_anomaly_nodes);
  for (std::size_t i = 0; i < num_clusters; ++i) {
    std::vector<NodeId> members;
    for (std::size_t p = 0; p < cluster_size; ++p) {
      const auto id = static_cast<NodeId>(i * cluster_size + p);
      members.push_back(id);
      topo.dt_nodes.push_back(id);
    }
    topo.clusters.push_back(std::move(members));
  }
  for (std::size_t n = 0; n < num_anomaly_nodes; ++n) {
    topo.anomaly_nodes.push_back(static_cast<NodeId>(n));
  }
  topo.build_index();
  return topo;
}

void NetworkTopology::build_index() {
  cluster_index_.assign(num_nodes, -1);
  position_.assign(num_nodes, 0);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    for (std::size_t p = 0; p < clusters[i].size(); ++p) {
      const NodeId n = clusters[i][p];
      if (n >= num_nodes) {
        throw ContractViolation("cluster member id out of range");
      }
      cluster_index_[n] = static_cast<int>(i);
      position_[n] = p;
    }
  }
}

void NetworkTopology::validate() const {
  std::vector<int> seen(num_nodes, 0);
  std::size_t members = 0;
  for (const auto& c : clusters) {
    if (c.size() != cluster_size) {
      throw ContractViolation("cluster size differs from cluster_size");
    }
    for (NodeId n : c) {
      if (n >= num_nodes) throw ContractViolation("node id out of range");
      if (seen[n]++) throw ContractViolation("clusters are not disjoint");
      ++members;
    }
  }
  if (members != dt_nodes.size()) {
    throw ContractViolation("cluster union differs from the DT node set");
  }
  for (NodeId n : dt_nodes) {
    if (n >= num_nodes || !seen[n]) {
      throw ContractViolation("DT node outside every cluster");
    }
  }
  std::vector<int> covered(num_nodes, 0);
  for (NodeId n : dt_nodes) covered[n] = 1;
  for (NodeId n : anomaly_nodes) {
    if (n >= num_nodes) throw ContractViolation("anomaly node out of range");
    covered[n] = 1;
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw ContractViolation("node belongs to neither N_d nor N_a");
  }
}

int NetworkTopology::cluster_of(NodeId node) const {
  return node < cluster_index_.size() ? cluster_index_[node] : -1;
}

std::size_t NetworkTopology::position_in_cluster(NodeId node) const {
  if (cluster_of(node) < 0) throw ContractViolation("not a DT node");
  return position_[node];
}

// ---------------------------------------------------------------------------
// ObservationModel

ObservationModel::ObservationModel(std::size_t num_states,
                                   std::vector<std::size_t> alphabet,
                                   std::vector<double> probs)
    : alphabet_(std::move(alphabet)), probs_(std::move(probs)) {
  pos_offset_.resize(alphabet_.size());
  stride_ = 0;
  for (std::size_t p = 0; p < alphabet_.size(); ++p) {
    if (alphabet_[p] == 0) throw ContractViolation("empty observation alphabet");
    pos_offset_[p] = stride_;
    stride_ += alphabet_[p];
  }
  if (probs_.size() != num_states * stride_) {
    throw ContractViolation("observation table has the wrong size");
  }
  deterministic_ = true;
  for (std::size_t y = 0; y < num_states; ++y) {
    for (std::size_t p = 0; p < alphabet_.size(); ++p) {
      double sum = 0.0;
      std::size_t support = 0;
      for (std::size_t o = 0; o < alphabet_[p]; ++o) {
        const double v = probs_[y * stride_ + pos_offset_[p] + o];
        if (v < 0.0) throw ContractViolation("negative observation probability");
        sum += v;
        support += v > 0.0;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw ContractViolation("observation distribution does not sum to 1");
      }
      if (support != 1) deterministic_ = false;
    }
  }
}

ObservationModel ObservationModel::binary_error_free(std::size_t cluster_size) {
  const std::size_t num_states = std::size_t{1} << cluster_size;
  std::vector<double> probs(num_states * cluster_size * 2, 0.0);
  for (std::size_t y = 0; y < num_states; ++y) {
    for (std::size_t p = 0; p < cluster_size; ++p) {
      const std::size_t bit = (y >> p) & 1U;
      probs[y * cluster_size * 2 + p * 2 + bit] = 1.0;
    }
  }
  return ObservationModel(num_states, std::vector<std::size_t>(cluster_size, 2),
                          std::move(probs));
}

// ---------------------------------------------------------------------------
// DriftClusterModel

DriftClusterModel::DriftClusterModel(std::size_t num_states,
                                     StateId initial_state,
                                     std::vector<double> transition,
                                     std::vector<bool> drift,
                                     ObservationModel observations)
    : num_states_(num_states),
      initial_(initial_state),
      transition_(std::move(transition)),
      drift_(std::move(drift)),
      observations_(std::move(observations)) {
  if (num_states_ == 0) throw ContractViolation("empty state space");
  if (transition_.size() != num_states_ * num_states_) {
    throw ContractViolation("transition matrix has the wrong size");
  }
  if (drift_.size() != num_states_) {
    throw ContractViolation("drift mask has the wrong size");
  }
  if (initial_ >= num_states_) throw ContractViolation("initial state out of range");
  if (drift_[initial_]) {
    throw ContractViolation("initial state must not be a drift state");
  }
  cumulative_.resize(transition_.size());
  for (std::size_t r = 0; r < num_states_; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_states_; ++c) {
      const double v = transition_[r * num_states_ + c];
      if (v < 0.0) throw ContractViolation("negative transition probability");
      sum += v;
      cumulative_[r * num_states_ + c] = sum;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "transition row " << r << " sums to " << sum;
      throw ContractViolation(os.str());
    }
  }
}

StateId DriftClusterModel::sample_next(StateId from, Rng& rng) const {
  if (from >= num_states_) throw ContractViolation("unknown state id");
  const double* row = cumulative_.data() + from * num_states_;
  const double u = uniform01(rng) * row[num_states_ - 1];
  const double* it = std::upper_bound(row, row + num_states_, u);
  auto next = static_cast<StateId>(it - row);
  if (next >= num_states_) {
    // Rounding pushed u past the last cumulative value.
    next = static_cast<StateId>(num_states_ - 1);
    while (transition_[from * num_states_ + next] == 0.0 && next > 0) --next;
  }
  return next;
}

StateId step_cluster(const DriftClusterModel& model, StateId state, Rng& rng) {
  return model.sample_next(state, rng);
}

// ---------------------------------------------------------------------------
// AnomalyProcess

AnomalyProcess::AnomalyProcess(std::size_t num_nodes, std::vector<NodeId> nodes,
                               std::vector<double> lambda, std::vector<double> mu)
    : nodes_(std::move(nodes)), lambda_(std::move(lambda)), mu_(std::move(mu)) {
  if (lambda_.size() != nodes_.size() || mu_.size() != nodes_.size()) {
    throw ContractViolation("rate vectors must match the node list");
  }
  index_.assign(num_nodes, -1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const NodeId n = nodes_[i];
    if (n >= num_nodes || index_[n] >= 0) {
      throw ContractViolation("bad or duplicate anomaly node id");
    }
    const double l = lambda_[i];
    const double m = mu_[i];
    if (l < 0.0 || m < 0.0 || l > 1.0 || m > 1.0 || l + m > 1.0 + 1e-15) {
      throw ContractViolation("anomaly rates must satisfy 0 <= l, m and l + m <= 1");
    }
    index_[n] = static_cast<int>(i);
  }
  active_.assign(nodes_.size(), 0);
  aoii_.assign(nodes_.size(), 0);
}

std::size_t AnomalyProcess::slot(NodeId node) const {
  if (!tracks(node)) throw ContractViolation("node is not an anomaly reporter");
  return static_cast<std::size_t>(index_[node]);
}

AnomalyProcess::Step AnomalyProcess::step(NodeId node, bool resolved, Rng& rng) {
  const std::size_t i = slot(node);
  bool next;
  if (!active_[i]) {
    next = uniform01(rng) < lambda_[i];
    if (next) ++generated_;
  } else if (resolved) {
    next = false;
  } else {
    next = !(uniform01(rng) < mu_[i]);
  }
  active_[i] = next;
  aoii_[i] = next ? aoii_[i] + 1 : 0;
  return {next, aoii_[i]};
}

AnomalyProcess::Step step_anomaly(AnomalyProcess& proc, NodeId node,
                                  bool resolved, Rng& rng) {
  return proc.step(node, resolved, rng);
}

// ---------------------------------------------------------------------------
// Binary majority scenario

std::vector<double> BinaryMajorityScenario::homogeneous(std::size_t cluster_size) {
  return std::vector<double>(cluster_size, 1.0);
}

std::vector<double> BinaryMajorityScenario::heterogeneous_default() {
  return {1.0, 7.0, 7.25, 7.5};
}

bool is_majority_drift(StateId y, std::size_t cluster_size) {
  return 2 * static_cast<std::size_t>(std::popcount(y)) >= cluster_size;
}

std::vector<double> binary_transition_matrix(std::span<const double> flip_up,
                                             double stay_one,
                                             std::size_t cluster_size) {
  if (flip_up.size() != cluster_size) {
    throw ContractViolation("flip-up vector length must equal cluster size");
  }
  const std::size_t n = std::size_t{1} << cluster_size;
  std::vector<double> t(n * n, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    const bool drift = is_majority_drift(static_cast<StateId>(y), cluster_size);
    for (std::size_t z = 0; z < n; ++z) {
      double p = 1.0;
      for (std::size_t b = 0; b < cluster_size && p > 0.0; ++b) {
        const bool from = (y >> b) & 1U;
        const bool to = (z >> b) & 1U;
        if (from) {
          const double keep = drift ? 1.0 : stay_one;
          p *= to ? keep : 1.0 - keep;
        } else {
          p *= to ? flip_up[b] : 1.0 - flip_up[b];
        }
      }
      t[y * n + z] = p;
    }
  }
  return t;
}

DriftClusterModel make_binary_cluster(std::span<const double> flip_up,
                                      double stay_one,
                                      std::size_t cluster_size) {
  if (cluster_size == 0 || cluster_size > 10) {
    throw ContractViolation("binary clusters support 1..10 sensors");
  }
  const std::size_t n = std::size_t{1} << cluster_size;
  std::vector<bool> drift(n);
  for (std::size_t y = 0; y < n; ++y) {
    drift[y] = is_majority_drift(static_cast<StateId>(y), cluster_size);
  }
  return DriftClusterModel(n, 0, binary_transition_matrix(flip_up, stay_one, cluster_size),
                           std::move(drift),
                           ObservationModel::binary_error_free(cluster_size));
}

double expected_absorption_time(const DriftClusterModel& model) {
  const std::size_t n = model.num_states();
  std::vector<int> idx(n, -1);
  std::vector<StateId> transient;
  for (std::size_t y = 0; y < n; ++y) {
    if (!model.is_drift(static_cast<StateId>(y))) {
      idx[y] = static_cast<int>(transient.size());
      transient.push_back(static_cast<StateId>(y));
    }
  }
  const auto m = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index r = 0; r < m; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) {
      a(r, c) -= model.transition(transient[r], transient[c]);
    }
  }
  const Eigen::VectorXd t = a.partialPivLu().solve(Eigen::VectorXd::Ones(m));
  const double result = t(idx[model.initial_state()]);
  if (!std::isfinite(result) || result <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return result;
}

namespace {

double absorption_time_for_scale(std::span<const double> base_u, double scale,
                                 double stay_one, std::size_t cluster_size) {
  std::vector<double> u(base_u.begin(), base_u.end());
  for (double& v : u) v *= scale;
  return expected_absorption_time(make_binary_cluster(u, stay_one, cluster_size));
}

}  // namespace

std::vector<double> calibrate_drift_rate(std::span<const double> base_u,
                                         double stay_one,
                                         std::size_t cluster_size,
                                         double rate_hz, double frame_s) {
  if (base_u.size() != cluster_size || cluster_size == 0) {
    throw ContractViolation("base flip vector length must equal cluster size");
  }
  for (double v : base_u) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw ContractViolation("base flip probabilities must lie in (0, 1]");
    }
  }
  if (!(rate_hz > 0.0) || !(frame_s > 0.0) || rate_hz * frame_s >= 1.0) {
    throw ContractViolation("drift rate must satisfy 0 < rate * T < 1");
  }
  const double target = 1.0 / (rate_hz * frame_s);
  const double s_max = 1.0 / *std::max_element(base_u.begin(), base_u.end());
  const double t_min = absorption_time_for_scale(base_u, s_max, stay_one, cluster_size);
  if (target < t_min * (1.0 - 1e-12)) {
    std::ostringstream os;
    os << "drift rate " << rate_hz << " Hz unreachable: achievable range is (0, "
       << 1.0 / (t_min * frame_s) << "] Hz";
    throw CalibrationError(os.str(), 0.0, 1.0 / (t_min * frame_s));
  }

  double hi = s_max;  // time(hi) <= target
  double lo = s_max;
  for (int i = 0; i < 2000; ++i) {
    lo *= 0.5;
    if (absorption_time_for_scale(base_u, lo, stay_one, cluster_size) >= target) break;
    hi = lo;
  }
  double scale = hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double t = absorption_time_for_scale(base_u, mid, stay_one, cluster_size);
    scale = mid;
    if (std::abs(t - target) <= 1e-10 * target) break;
    if (t > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::vector<double> u(base_u.begin(), base_u.end());
  for (double& v : u) v *= scale;
  return u;
}

std::vector<DriftClusterModel> build_binary_scenario(
    const BinaryMajorityScenario& spec) {
  if (spec.cluster_size == 0 || spec.num_clusters == 0) {
    throw ContractViolation("scenario needs at least one cluster of one sensor");
  }
  if (spec.heterogeneity.size() != spec.cluster_size) {
    throw ContractViolation("heterogeneity vector length must equal cluster size");
  }
  for (double h : spec.heterogeneity) {
    if (!(h > 0.0)) throw ContractViolation("heterogeneity entries must be positive");
  }
  // Normalize so the largest base entry is 1; calibration rescales anyway.
  const double top = *std::max_element(spec.heterogeneity.begin(), spec.heterogeneity.end());
  std::vector<double> base;
  for (double h : spec.heterogeneity) base.push_back(h / top);
  const auto u = calibrate_drift_rate(base, spec.stay_one, spec.cluster_size,
                                      spec.target_drift_rate_hz,
                                      spec.frame_duration_s);
  std::vector<DriftClusterModel> out;
  out.reserve(spec.num_clusters);
  for (std::size_t i = 0; i < spec.num_clusters; ++i) {
    out.push_back(make_binary_cluster(u, spec.stay_one, spec.cluster_size));
  }
  return out;
}

}  // namespace pushpull
