#include "pushpull/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pushpull/errors.hpp"

namespace pushpull {

// ---------------------------------------------------------------------------
// Drift belief

DriftBelief DriftBelief::point_mass(std::size_t cluster, std::size_t num_states,
                                    StateId state) {
  if (state >= num_states) throw ContractViolation("state out of range");
  DriftBelief b;
  b.cluster = cluster;
  b.pmf.assign(num_states, 0.0);
  b.pmf[state] = 1.0;
  return b;
}

DriftBelief drift_prior(const DriftBelief& posterior,
                        const DriftClusterModel& model) {
  const std::size_t n = model.num_states();
  if (posterior.pmf.size() != n) throw ContractViolation("belief size mismatch");
  DriftBelief prior;
  prior.cluster = posterior.cluster;
  prior.stage = BeliefStage::Prior;
  prior.pmf.assign(n, 0.0);
  for (std::size_t from = 0; from < n; ++from) {
    const double w = posterior.pmf[from];
    if (w == 0.0) continue;
    const auto row = model.transition_row(static_cast<StateId>(from));
    for (std::size_t to = 0; to < n; ++to) prior.pmf[to] += w * row[to];
  }
  const double total = std::accumulate(prior.pmf.begin(), prior.pmf.end(), 0.0);
  for (double& v : prior.pmf) v /= total;
  return prior;
}

namespace {

void check_observation(const DriftClusterModel& model,
                       const PartialObservation& obs) {
  const auto& om = model.observations();
  if (obs.size() != om.num_positions()) {
    throw ContractViolation("observation length differs from cluster size");
  }
  for (std::size_t p = 0; p < obs.size(); ++p) {
    if (obs[p] && *obs[p] >= om.alphabet(p)) {
      throw ContractViolation("observation symbol outside the alphabet");
    }
  }
}

// Sum over completions of the erased positions of Omega(y, o). The model is
// factorized, so erased positions marginalize to one.
double observation_likelihood(const ObservationModel& om, StateId y,
                              const PartialObservation& obs) {
  double l = 1.0;
  for (std::size_t p = 0; p < obs.size() && l > 0.0; ++p) {
    if (obs[p]) l *= om.prob(y, p, *obs[p]);
  }
  return l;
}

}  // namespace

std::vector<StateId> compatible_states(const DriftClusterModel& model,
                                       const PartialObservation& obs) {
  check_observation(model, obs);
  const auto& om = model.observations();
  if (!om.deterministic()) {
    throw ContractViolation("compatible_states needs an error-free observation model");
  }
  std::vector<StateId> out;
  for (std::size_t y = 0; y < model.num_states(); ++y) {
    if (observation_likelihood(om, static_cast<StateId>(y), obs) > 0.0) {
      out.push_back(static_cast<StateId>(y));
    }
  }
  return out;
}

std::vector<std::vector<std::uint32_t>> compatible_observations(
    const DriftClusterModel& model, const PartialObservation& obs) {
  check_observation(model, obs);
  const auto& om = model.observations();
  std::vector<std::vector<std::uint32_t>> out{{}};
  for (std::size_t p = 0; p < obs.size(); ++p) {
    std::vector<std::vector<std::uint32_t>> next;
    for (const auto& partial : out) {
      if (obs[p]) {
        auto v = partial;
        v.push_back(*obs[p]);
        next.push_back(std::move(v));
      } else {
        for (std::uint32_t o = 0; o < om.alphabet(p); ++o) {
          auto v = partial;
          v.push_back(o);
          next.push_back(std::move(v));
        }
      }
    }
    out = std::move(next);
  }
  return out;
}

DriftBelief drift_posterior(const DriftBelief& prior,
                            const DriftClusterModel& model,
                            const PartialObservation& obs) {
  check_observation(model, obs);
  if (prior.pmf.size() != model.num_states()) {
    throw ContractViolation("belief size mismatch");
  }
  const auto& om = model.observations();
  DriftBelief post;
  post.cluster = prior.cluster;
  post.stage = BeliefStage::Posterior;
  post.pmf.assign(prior.pmf.size(), 0.0);
  double total = 0.0;
  for (std::size_t y = 0; y < prior.pmf.size(); ++y) {
    if (prior.pmf[y] == 0.0) continue;
    const double v =
        prior.pmf[y] * observation_likelihood(om, static_cast<StateId>(y), obs);
    post.pmf[y] = v;
    total += v;
  }
  if (!(total > 0.0)) {
    std::ostringstream os;
    os << "cluster " << prior.cluster
       << ": observation has zero probability under the prior";
    throw InconsistencyError(os.str());
  }
  for (double& v : post.pmf) v /= total;
  return post;
}

double drift_risk(const DriftBelief& belief, const DriftClusterModel& model) {
  double risk = 0.0;
  for (std::size_t y = 0; y < belief.pmf.size(); ++y) {
    if (model.is_drift(static_cast<StateId>(y))) risk += belief.pmf[y];
  }
  return std::clamp(risk, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Anomaly belief

AnomalyBelief::AnomalyBelief(NodeId node, std::vector<double> pmf,
                             BeliefStage stage)
    : node_(node), pmf_(std::move(pmf)), stage_(stage) {
  if (pmf_.empty()) throw ContractViolation("anomaly belief needs a support");
  for (double v : pmf_) {
    if (!(v >= 0.0)) throw ContractViolation("negative anomaly belief entry");
  }
  refresh_top(pmf_.size() - 1);
}

AnomalyBelief AnomalyBelief::zero(NodeId node, std::size_t cap,
                                  BeliefStage stage) {
  std::vector<double> pmf(cap + 1, 0.0);
  pmf[0] = 1.0;
  return AnomalyBelief(node, std::move(pmf), stage);
}

void AnomalyBelief::refresh_top(std::size_t from) {
  std::size_t t = std::min(from, pmf_.size() - 1);
  while (t > 0 && pmf_[t] == 0.0) --t;
  top_ = t;
}

double AnomalyBelief::mass_at_or_below(std::size_t theta) const {
  const std::size_t end = std::min(theta, top_);
  double s = 0.0;
  for (std::size_t j = 0; j <= end; ++j) s += pmf_[j];
  return s;
}

double AnomalyBelief::mass_above(std::size_t theta) const {
  double s = 0.0;
  for (std::size_t j = theta + 1; j <= top_; ++j) s += pmf_[j];
  return s;
}

AnomalyBelief anomaly_prior(const AnomalyBelief& posterior, double lambda,
                            double mu, bool scheduled_in_pull) {
  const std::size_t cap = posterior.cap();
  if (scheduled_in_pull) {
    return AnomalyBelief::zero(posterior.node(), cap, BeliefStage::Prior);
  }
  AnomalyBelief prior;
  prior.node_ = posterior.node();
  prior.stage_ = BeliefStage::Prior;
  prior.pmf_.assign(cap + 1, 0.0);
  const auto& src = posterior.pmf_;
  auto& dst = prior.pmf_;
  dst[0] = (1.0 - lambda - mu) * src[0] + mu;
  if (cap == 0) {
    dst[0] = 1.0;
    prior.top_ = 0;
    return prior;
  }
  dst[1] = lambda * src[0];
  const std::size_t top = posterior.top_;
  for (std::size_t theta = 2; theta <= std::min(top + 1, cap); ++theta) {
    dst[theta] = (1.0 - mu) * src[theta - 1];
  }
  if (top == cap) dst[cap] += (1.0 - mu) * src[cap];
  if (dst[0] < 0.0) dst[0] = 0.0;
  prior.refresh_top(std::min(top + 1, cap));
  return prior;
}

AnomalyBelief anomaly_posterior_success(NodeId node, std::size_t cap) {
  return AnomalyBelief::zero(node, cap, BeliefStage::Posterior);
}

AnomalyBelief anomaly_posterior_silent(const AnomalyBelief& prior,
                                       std::size_t threshold) {
  const double kept = prior.mass_at_or_below(threshold);
  if (!(kept > 0.0)) {
    std::ostringstream os;
    os << "node " << prior.node() << ": silent outcome impossible, no prior mass at or below "
       << threshold;
    throw InconsistencyError(os.str());
  }
  AnomalyBelief post;
  post.node_ = prior.node();
  post.stage_ = BeliefStage::Posterior;
  post.pmf_.assign(prior.pmf_.size(), 0.0);
  const std::size_t end = std::min(threshold, prior.top_);
  for (std::size_t j = 0; j <= end; ++j) post.pmf_[j] = prior.pmf_[j] / kept;
  post.refresh_top(end);
  return post;
}

ActivationStats activation_stats(std::span<const AnomalyBelief> priors,
                                 std::size_t threshold) {
  ActivationStats st;
  st.alpha.reserve(priors.size());
  st.potentially_active = 0;
  double sum = 0.0;
  for (const auto& b : priors) {
    const double a = std::min(1.0, b.mass_above(threshold));
    st.alpha.push_back(a);
    if (a > 0.0) {
      ++st.potentially_active;
      sum += a;
    }
  }
  st.mean_alpha = st.potentially_active ? sum / static_cast<double>(st.potentially_active) : 0.0;
  return st;
}

std::vector<double> active_count_prior(std::size_t potentially_active,
                                       double mean_alpha) {
  if (!(mean_alpha >= 0.0 && mean_alpha <= 1.0)) {
    throw ContractViolation("mean activation probability must lie in [0, 1]");
  }
  const std::size_t n = potentially_active;
  std::vector<double> pmf(n + 1, 0.0);
  if (mean_alpha == 0.0) {
    pmf[0] = 1.0;
    return pmf;
  }
  if (mean_alpha == 1.0) {
    pmf[n] = 1.0;
    return pmf;
  }
  const double log_p = std::log(mean_alpha);
  const double log_q = std::log1p(-mean_alpha);
  const double lg_n = std::lgamma(static_cast<double>(n) + 1.0);
  for (std::size_t a = 0; a <= n; ++a) {
    const double da = static_cast<double>(a);
    const double log_c = lg_n - std::lgamma(da + 1.0) -
                         std::lgamma(static_cast<double>(n - a) + 1.0);
    pmf[a] = std::exp(log_c + da * log_p + static_cast<double>(n - a) * log_q);
  }
  const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
  for (double& v : pmf) v /= total;
  return pmf;
}

namespace {

double log_factorial(std::size_t n) {
  return std::lgamma(static_cast<double>(n) + 1.0);
}

}  // namespace

double outcome_likelihood(std::size_t successes, std::size_t collisions,
                          std::size_t active, std::size_t slots) {
  const std::size_t s = successes;
  const std::size_t c = collisions;
  const std::size_t a = active;
  if (s + c > slots) return 0.0;
  if (a < s + 2 * c || a > s + 3 * c) return 0.0;
  if (a == 0) return 1.0;
  const std::size_t triples = a - s - 2 * c;
  const std::size_t pairs = c - triples;
  // Partitions of the a nodes into s singletons, `pairs` pairs and `triples`
  // triples, times injective placements of those s + c groups on P slots.
  const double log_count = log_factorial(a) - log_factorial(s) -
                           static_cast<double>(pairs) * std::log(2.0) -
                           static_cast<double>(triples) * std::log(6.0) -
                           log_factorial(pairs) - log_factorial(triples) +
                           log_factorial(slots) - log_factorial(slots - s - c);
  return std::exp(log_count - static_cast<double>(a) *
                                  std::log(static_cast<double>(slots)));
}

double printed_outcome_likelihood(std::size_t successes,
                                  std::size_t collisions, std::size_t active,
                                  std::size_t slots) {
  const std::size_t s = successes;
  const std::size_t c = collisions;
  const std::size_t a = active;
  if (s + c > slots) return 0.0;
  if (a < s + 2 * c || a > s + 3 * c) return 0.0;
  if (a == 0) return 1.0;
  const std::size_t rest = a - s - 2 * c;
  const double log_multinomial = log_factorial(a) - log_factorial(s) -
                                 2.0 * log_factorial(c) - log_factorial(rest);
  const double log_tail = log_factorial(slots) - log_factorial(slots - s - c) -
                          log_factorial(c) -
                          static_cast<double>(a) * std::log(static_cast<double>(slots)) -
                          static_cast<double>(c) * std::log(2.0) -
                          static_cast<double>(rest) * std::log(3.0);
  return std::exp(log_multinomial + log_tail);
}

std::vector<double> active_count_posterior(std::span<const double> prior,
                                           std::size_t successes,
                                           std::size_t collisions,
                                           std::size_t slots) {
  std::vector<double> post(prior.size(), 0.0);
  double total = 0.0;
  for (std::size_t a = successes + 2 * collisions; a < prior.size(); ++a) {
    if (prior[a] == 0.0) continue;
    const double v = prior[a] * outcome_likelihood(successes, collisions, a, slots);
    post[a] = v;
    total += v;
  }
  if (!(total > 0.0)) {
    std::ostringstream os;
    os << "no feasible active-node count for s=" << successes
       << ", c=" << collisions << ", P=" << slots;
    throw InconsistencyError(os.str());
  }
  for (double& v : post) v /= total;
  return post;
}

double collider_probability(std::span<const double> posterior,
                            std::size_t successes,
                            std::size_t potentially_active) {
  if (potentially_active < successes) {
    throw ContractViolation("more successes than potentially active nodes");
  }
  if (potentially_active == successes) return 0.0;
  double expected = 0.0;
  for (std::size_t a = successes + 1; a < posterior.size(); ++a) {
    expected += static_cast<double>(a - successes) * posterior[a];
  }
  return std::clamp(
      expected / static_cast<double>(potentially_active - successes), 0.0, 1.0);
}

AnomalyBelief anomaly_posterior_collision(const AnomalyBelief& prior,
                                          std::size_t threshold, double p_chi) {
  if (!(p_chi >= 0.0 && p_chi <= 1.0)) {
    throw ContractViolation("collider probability must lie in [0, 1]");
  }
  const double below = prior.mass_at_or_below(threshold);
  const double above = prior.mass_above(threshold);
  if ((!(below > 0.0) && p_chi < 1.0) || (!(above > 0.0) && p_chi > 0.0)) {
    std::ostringstream os;
    os << "node " << prior.node() << ": collision update needs prior mass on both sides of "
       << threshold << " (below=" << below << ", above=" << above
       << ", p_chi=" << p_chi << ")";
    throw InconsistencyError(os.str());
  }
  AnomalyBelief post;
  post.node_ = prior.node();
  post.stage_ = BeliefStage::Posterior;
  post.pmf_.assign(prior.pmf_.size(), 0.0);
  const std::size_t top = prior.top_;
  if (below > 0.0) {
    for (std::size_t j = 0; j <= std::min(threshold, top); ++j) {
      post.pmf_[j] = prior.pmf_[j] * (1.0 - p_chi) / below;
    }
  }
  if (above > 0.0) {
    for (std::size_t j = threshold + 1; j <= top; ++j) {
      post.pmf_[j] = prior.pmf_[j] * p_chi / above;
    }
  }
  post.refresh_top(top);
  return post;
}

// ---------------------------------------------------------------------------
// Push outcome

std::int64_t SlotOutcome::encode() const {
  switch (kind) {
    case Kind::Empty:
      return 0;
    case Kind::Collision:
      return -1;
    case Kind::Success:
      return static_cast<std::int64_t>(node) + 1;
  }
  return 0;
}

PushOutcome PushOutcome::from_choices(std::size_t num_slots,
                                      std::span<const NodeId> transmitters,
                                      std::span<const std::size_t> chosen_slots) {
  if (transmitters.size() != chosen_slots.size()) {
    throw ContractViolation("one slot choice per transmitter");
  }
  PushOutcome out;
  out.slots.resize(num_slots);
  std::vector<std::size_t> load(num_slots, 0);
  for (std::size_t i = 0; i < transmitters.size(); ++i) {
    const std::size_t slot = chosen_slots[i];
    if (slot >= num_slots) throw ContractViolation("slot index out of range");
    if (load[slot]++ == 0) {
      out.slots[slot] = {SlotOutcome::Kind::Success, transmitters[i]};
    } else {
      out.slots[slot] = {SlotOutcome::Kind::Collision, 0};
    }
  }
  for (const auto& s : out.slots) {
    out.successes += s.kind == SlotOutcome::Kind::Success;
    out.collisions += s.kind == SlotOutcome::Kind::Collision;
  }
  return out;
}

bool PushOutcome::succeeded(NodeId node) const {
  return std::any_of(slots.begin(), slots.end(), [node](const SlotOutcome& s) {
    return s.kind == SlotOutcome::Kind::Success && s.node == node;
  });
}

void PushOutcome::validate() const {
  std::size_t s = 0;
  std::size_t c = 0;
  std::vector<NodeId> ids;
  for (const auto& slot : slots) {
    if (slot.kind == SlotOutcome::Kind::Success) {
      ++s;
      ids.push_back(slot.node);
    }
    c += slot.kind == SlotOutcome::Kind::Collision;
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw ContractViolation("a node succeeded in two slots");
  }
  if (s != successes || c != collisions || s + c > slots.size()) {
    throw ContractViolation("push outcome counts disagree with the slots");
  }
}

}  // namespace pushpull
