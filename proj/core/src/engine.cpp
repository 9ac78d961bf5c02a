#include "pushpull/engine.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "pushpull/errors.hpp"

namespace pushpull {

// ---------------------------------------------------------------------------
// Configuration

void SimConfig::validate() const {
  if (scenario != "het" && scenario != "hom") {
    throw ConfigError("scenario must be 'het' or 'hom'");
  }
  if (cluster_size == 0 || cluster_size > 10) {
    throw ConfigError("cluster_size must lie in 1..10");
  }
  if (dt_nodes % cluster_size != 0) {
    throw ConfigError("dt_nodes must be a multiple of cluster_size");
  }
  if (!heterogeneity.empty() && heterogeneity.size() != cluster_size) {
    throw ConfigError("heterogeneity needs one entry per cluster position");
  }
  for (double h : heterogeneity) {
    if (!(h > 0.0)) throw ConfigError("heterogeneity entries must be positive");
  }
  if (!(stay_one >= 0.0 && stay_one <= 1.0)) throw ConfigError("stay_one must lie in [0, 1]");
  if (dt_nodes > 0 && !(drift_rate_hz > 0.0)) {
    throw ConfigError("rho_d_hz must be positive when DT clusters exist");
  }
  if (dt_nodes > 0 && drift_rate_hz * frame.frame_duration_s >= 1.0) {
    throw ConfigError("rho_d_hz * T must stay below 1");
  }
  if (!(anomaly_rate_hz >= 0.0)) throw ConfigError("rho_a_hz must be non-negative");
  if (!(anomaly_resolution >= 0.0 && anomaly_resolution <= 1.0)) {
    throw ConfigError("mu must lie in [0, 1]");
  }
  if (anomaly_rate_hz * frame.frame_duration_s + anomaly_resolution > 1.0) {
    throw ConfigError("per-frame anomaly rate plus mu exceeds 1");
  }
  if (aoii_cap < 2) throw ConfigError("theta_cap must be at least 2");
  frame.validate(adaptive());
  if (!adaptive() && policy.fixed_push_slots > frame.total_res) {
    throw ConfigError("P exceeds R");
  }
  if (!(fsa.target_load >= 0.0) || !(fsa.min_load >= 0.0) ||
      !(fsa.max_load >= fsa.min_load) || !(fsa.adapt_step >= 0.0)) {
    throw ConfigError("invalid FSA load parameters");
  }
  if (fsa_p_tx_override && !(*fsa_p_tx_override >= 0.0 && *fsa_p_tx_override <= 1.0)) {
    throw ConfigError("fsa_p_tx_override must lie in [0, 1]");
  }
  if (episodes == 0) throw ConfigError("episodes must be at least 1");
  if (frames == 0) throw ConfigError("frames must be at least 1");
}

// ---------------------------------------------------------------------------
// Metrics

void AgeHistogram::add(std::uint32_t value, std::uint64_t times) {
  if (value >= bins_.size()) bins_.resize(value + 1, 0);
  bins_[value] += times;
  count_ += times;
  sum_ += static_cast<long double>(value) * times;
}

void AgeHistogram::merge(const AgeHistogram& other) {
  if (other.bins_.size() > bins_.size()) bins_.resize(other.bins_.size(), 0);
  for (std::size_t v = 0; v < other.bins_.size(); ++v) bins_[v] += other.bins_[v];
  count_ += other.count_;
  sum_ += other.sum_;
}

double AgeHistogram::mean() const {
  return count_ ? static_cast<double>(sum_ / count_) : 0.0;
}

std::uint32_t AgeHistogram::percentile(double q) const {
  if (!(q > 0.0 && q <= 1.0)) throw ContractViolation("percentile must lie in (0, 1]");
  if (count_ == 0) return 0;
  const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(count_)));
  std::uint64_t seen = 0;
  for (std::size_t v = 0; v < bins_.size(); ++v) {
    seen += bins_[v];
    if (seen >= std::max<std::uint64_t>(rank, 1)) return static_cast<std::uint32_t>(v);
  }
  return static_cast<std::uint32_t>(bins_.size() - 1);
}

void MetricsLedger::merge(const MetricsLedger& o) {
  psi.merge(o.psi);
  theta.merge(o.theta);
  frames += o.frames;
  push_slot_total += o.push_slot_total;
  collided_slots += o.collided_slots;
  success_slots += o.success_slots;
  empty_slots += o.empty_slots;
  resets += o.resets;
  anomalies_generated += o.anomalies_generated;
  resolved_by_push += o.resolved_by_push;
  resolved_by_pull += o.resolved_by_pull;
  still_active += o.still_active;
  activity_fallbacks += o.activity_fallbacks;
}

Summary summarize(const MetricsLedger& ledger, double frame_s) {
  const double ms = frame_s * 1000.0;
  Summary s;
  s.psi_avg_ms = ledger.psi.mean() * ms;
  s.psi_p99_ms = ledger.psi.percentile(0.99) * ms;
  s.theta_avg_ms = ledger.theta.mean() * ms;
  s.theta_p99_ms = ledger.theta.percentile(0.99) * ms;
  s.mean_push_res = ledger.frames ? static_cast<double>(ledger.push_slot_total) /
                                        static_cast<double>(ledger.frames)
                                  : 0.0;
  s.collision_rate = ledger.push_slot_total
                         ? static_cast<double>(ledger.collided_slots) /
                               static_cast<double>(ledger.push_slot_total)
                         : 0.0;
  s.ledger = ledger;
  return s;
}

// ---------------------------------------------------------------------------
// Context

SimContext::SimContext(SimConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t clusters = config_.dt_nodes / config_.cluster_size;
  topology_ = NetworkTopology::make(clusters, config_.cluster_size, config_.anomaly_nodes);
  if (clusters > 0) {
    BinaryMajorityScenario spec;
    spec.num_clusters = clusters;
    spec.cluster_size = config_.cluster_size;
    if (!config_.heterogeneity.empty()) {
      spec.heterogeneity = config_.heterogeneity;
    } else if (config_.scenario == "het") {
      if (config_.cluster_size != 4) {
        throw ConfigError("the default heterogeneous ratios need cluster_size 4");
      }
      spec.heterogeneity = BinaryMajorityScenario::heterogeneous_default();
    } else {
      spec.heterogeneity = BinaryMajorityScenario::homogeneous(config_.cluster_size);
    }
    spec.stay_one = config_.stay_one;
    spec.target_drift_rate_hz = config_.drift_rate_hz;
    spec.frame_duration_s = config_.frame.frame_duration_s;
    models_ = build_binary_scenario(spec);
  }
  lambda_ = config_.anomaly_rate_hz * config_.frame.frame_duration_s;
}

// ---------------------------------------------------------------------------
// Episode

namespace {

AnomalyProcess make_process(const SimContext& ctx) {
  const auto& topo = ctx.topology();
  const std::size_t n = topo.anomaly_nodes.size();
  return AnomalyProcess(topo.num_nodes, topo.anomaly_nodes,
                        std::vector<double>(n, ctx.anomaly_rate_per_frame()),
                        std::vector<double>(n, ctx.config().anomaly_resolution));
}

}  // namespace

Episode::Episode(const SimContext& context, std::uint64_t seed)
    : ctx_(context), rng_(seed), anomalies_(make_process(context)) {
  const auto& cfg = ctx_.config();
  const auto& topo = ctx_.topology();
  const auto models = ctx_.models();
  for (std::size_t i = 0; i < models.size(); ++i) {
    cluster_state_.push_back(models[i].initial_state());
    drift_post_.push_back(
        DriftBelief::point_mass(i, models[i].num_states(), models[i].initial_state()));
  }
  drift_prior_ = drift_post_;
  psi_.assign(models.size(), 0);
  reported_.assign(topo.num_nodes, 0);
  age_.assign(topo.num_nodes, 0);
  for (NodeId n : topo.anomaly_nodes) {
    anomaly_post_.push_back(AnomalyBelief::zero(n, cfg.aoii_cap));
  }
  anomaly_prior_ = anomaly_post_;

  const std::size_t r = cfg.frame.total_res;
  if (cfg.adaptive()) {
    alloc_.push_slots = std::clamp(r / 2, cfg.frame.r_min, r - cfg.frame.r_min);
  } else {
    alloc_.push_slots = cfg.policy.fixed_push_slots;
  }

  if (cfg.policy.push == PushPolicy::Fsa || cfg.policy.push == PushPolicy::Afsa) {
    const auto p_of = [&](double load) {
      if (cfg.fsa_p_tx_override) return *cfg.fsa_p_tx_override;
      if (topo.anomaly_nodes.empty() || !(cfg.anomaly_rate_hz > 0.0)) return 0.0;
      const std::size_t slots = cfg.adaptive() ? r / 2 : cfg.policy.fixed_push_slots;
      return pushpull::fsa_p_tx(slots, load, topo.anomaly_nodes.size(), cfg.anomaly_rate_hz,
                      cfg.frame.frame_duration_s);
    };
    fsa_.p_tx = p_of(cfg.fsa.target_load);
    fsa_.p_lo = cfg.fsa_p_tx_override ? 0.0 : p_of(cfg.fsa.min_load);
    fsa_.p_hi = cfg.fsa_p_tx_override ? 1.0 : p_of(cfg.fsa.max_load);
    fsa_.p_tx = std::clamp(fsa_.p_tx, fsa_.p_lo, fsa_.p_hi);
  }
}

std::size_t Episode::allocate() {
  const auto& cfg = ctx_.config();
  if (!cfg.adaptive()) return cfg.policy.fixed_push_slots;
  std::vector<double> risks(drift_post_.size());
  for (std::size_t i = 0; i < risks.size(); ++i) {
    risks[i] = drift_risk(drift_post_[i], ctx_.models()[i]);
  }
  alloc_.drift_urgency = drift_urgency(risks);
  alloc_.anomaly_urgency = anomaly_urgency(anomaly_post_, cfg.frame.aoii_risk_threshold);
  const std::size_t r = cfg.frame.total_res;
  if (cfg.policy.alloc == AllocPolicy::Rsm) {
    return rsm_allocate(alloc_.drift_urgency, alloc_.anomaly_urgency, r, cfg.frame.r_min);
  }
  return ssm_allocate(alloc_.push_slots, alloc_.drift_urgency, alloc_.anomaly_urgency,
                      cfg.frame.hysteresis, r, cfg.frame.r_min);
}

std::vector<NodeId> Episode::schedule_pull(std::size_t count) {
  const auto& topo = ctx_.topology();
  count = std::min(count, topo.dt_nodes.size());
  if (count == 0) return {};
  switch (ctx_.config().policy.pull) {
    case PullPolicy::Pps:
      return pps_pull_schedule(drift_prior_, ctx_.models(), topo, count);
    case PullPolicy::Maf:
      return maf_schedule(topo.dt_nodes, age_, count);
    case PullPolicy::Cra: {
      std::vector<double> risks(drift_prior_.size());
      for (std::size_t i = 0; i < risks.size(); ++i) {
        risks[i] = drift_risk(drift_prior_[i], ctx_.models()[i]);
      }
      return cra_pull_schedule(risks, topo, count, rng_);
    }
  }
  return {};
}

std::uint32_t Episode::sample_symbol(const ObservationModel& om, StateId y,
                                     std::size_t pos) {
  const std::size_t k = om.alphabet(pos);
  if (om.deterministic()) {
    for (std::size_t s = 0; s < k; ++s) {
      if (om.prob(y, pos, s) > 0.0) return static_cast<std::uint32_t>(s);
    }
  }
  double u = uniform01(rng_);
  for (std::size_t s = 0; s + 1 < k; ++s) {
    u -= om.prob(y, pos, s);
    if (u < 0.0) return static_cast<std::uint32_t>(s);
  }
  return static_cast<std::uint32_t>(k - 1);
}

void Episode::update_anomaly_beliefs_pps(const PushOutcome& outcome,
                                         std::size_t threshold,
                                         std::span<const std::uint8_t> pulled,
                                         std::span<const std::uint8_t> pushed) {
  const std::size_t n = anomaly_prior_.size();
  if (outcome.collisions == 0) {
    for (std::size_t i = 0; i < n; ++i) {
      if (pulled[i] || pushed[i]) continue;
      anomaly_post_[i] = anomaly_posterior_silent(anomaly_prior_[i], threshold);
    }
    return;
  }
  const ActivationStats st = activation_stats(anomaly_prior_, threshold);
  const auto count_prior = active_count_prior(st.potentially_active, st.mean_alpha);
  std::vector<double> count_post;
  try {
    count_post = active_count_posterior(count_prior, outcome.successes, outcome.collisions,
                                        outcome.slots.size());
  } catch (const InconsistencyError&) {
    // A slot held four or more transmitters; keep only the lower bound.
    ++ledger_.activity_fallbacks;
    count_post.assign(count_prior.size(), 0.0);
    double total = 0.0;
    for (std::size_t a = outcome.successes + 2 * outcome.collisions; a < count_prior.size();
         ++a) {
      count_post[a] = count_prior[a];
      total += count_prior[a];
    }
    if (!(total > 0.0)) {
      throw InconsistencyError("collision outcome needs more active nodes than possible");
    }
    for (double& v : count_post) v /= total;
  }
  const double p_chi =
      collider_probability(count_post, outcome.successes, st.potentially_active);
  for (std::size_t i = 0; i < n; ++i) {
    if (pulled[i] || pushed[i]) continue;
    const AnomalyBelief& prior = anomaly_prior_[i];
    if (st.alpha[i] == 0.0) {
      anomaly_post_[i] = anomaly_posterior_silent(prior, threshold);
    } else if (prior.mass_at_or_below(threshold) == 0.0) {
      // Certain transmitter that did not get through.
      anomaly_post_[i] = anomaly_posterior_collision(prior, threshold, 1.0);
    } else {
      anomaly_post_[i] = anomaly_posterior_collision(prior, threshold, p_chi);
    }
  }
}

FrameLog Episode::run_frame() {
  const auto& cfg = ctx_.config();
  const auto& topo = ctx_.topology();
  const auto models = ctx_.models();
  const std::size_t num_clusters = models.size();
  const std::size_t num_anom = anomaly_prior_.size();

  FrameLog log;
  log.frame = frame_;
  try {
    // World step, applying last frame's reports.
    for (std::size_t i = 0; i < num_clusters; ++i) {
      cluster_state_[i] = step_cluster(models[i], cluster_state_[i], rng_);
    }
    const std::uint64_t generated_before = anomalies_.generated();
    for (NodeId n : topo.anomaly_nodes) anomalies_.step(n, reported_[n] != 0, rng_);
    ledger_.anomalies_generated += anomalies_.generated() - generated_before;
    std::fill(reported_.begin(), reported_.end(), 0);

    // Split of the frame.
    alloc_.push_slots = allocate();
    const std::size_t push = alloc_.push_slots;
    const std::size_t pull = cfg.frame.total_res - push;
    log.push_slots = push;
    log.pull_slots = pull;

    for (std::size_t i = 0; i < num_clusters; ++i) {
      drift_prior_[i] = drift_prior(drift_post_[i], models[i]);
    }

    // Pull subframe.
    const std::vector<NodeId> scheduled = schedule_pull(pull);
    log.scheduled = scheduled;
    std::vector<PartialObservation> obs(num_clusters,
                                        PartialObservation(topo.cluster_size));
    std::vector<std::uint8_t> pulled(num_anom, 0);
    auto observe = [&](NodeId node) {
      const int c = topo.cluster_of(node);
      if (c < 0) return;
      const std::size_t pos = topo.position_in_cluster(node);
      obs[c][pos] = sample_symbol(models[c].observations(), cluster_state_[c], pos);
    };
    for (NodeId node : scheduled) {
      observe(node);
      reported_[node] = 1;
      if (anomalies_.tracks(node)) {
        pulled[node] = 1;
        if (anomalies_.active(node)) ++ledger_.resolved_by_pull;
      }
    }

    for (std::size_t i = 0; i < num_anom; ++i) {
      anomaly_prior_[i] = anomaly_prior(anomaly_post_[i], anomalies_.lambda(i),
                                        anomalies_.mu(i), pulled[i] != 0);
    }

    // Push subframe.
    std::vector<std::uint8_t> pushed(num_anom, 0);
    PushOutcome outcome;
    std::size_t threshold = 0;
    if (push > 0 && num_anom > 0) {
      std::vector<NodeId> senders;
      std::vector<std::size_t> choice;
      std::uniform_int_distribution<std::size_t> slot_pick(0, push - 1);
      switch (cfg.policy.push) {
        case PushPolicy::Pps:
          threshold = pps_push_threshold(anomaly_prior_, push, cfg.frame.collision_cap);
          for (NodeId n : topo.anomaly_nodes) {
            if (pulled[n] || !anomalies_.active(n) || anomalies_.aoii(n) <= threshold) continue;
            senders.push_back(n);
            choice.push_back(slot_pick(rng_));
          }
          break;
        case PushPolicy::Fsa:
        case PushPolicy::Afsa:
          for (NodeId n : topo.anomaly_nodes) {
            if (pulled[n] || !anomalies_.active(n)) continue;
            if (uniform01(rng_) >= fsa_.p_tx) continue;
            senders.push_back(n);
            choice.push_back(slot_pick(rng_));
          }
          break;
        case PushPolicy::Maf: {
          std::vector<NodeId> candidates;
          for (NodeId n : topo.anomaly_nodes) {
            if (!pulled[n]) candidates.push_back(n);
          }
          senders = maf_schedule(candidates, age_, push);
          choice.resize(senders.size());
          std::iota(choice.begin(), choice.end(), std::size_t{0});
          break;
        }
      }
      outcome = PushOutcome::from_choices(push, senders, choice);
      for (const auto& slot : outcome.slots) {
        if (slot.kind != SlotOutcome::Kind::Success) continue;
        const NodeId n = slot.node;
        pushed[n] = 1;
        reported_[n] = 1;
        if (anomalies_.active(n)) ++ledger_.resolved_by_push;
        observe(n);
      }
      ledger_.push_slot_total += push;
      ledger_.collided_slots += outcome.collisions;
      ledger_.success_slots += outcome.successes;
      ledger_.empty_slots += outcome.empty();
      log.slots.reserve(push);
      for (const auto& slot : outcome.slots) log.slots.push_back(slot.encode());
    }
    log.push_threshold = threshold;

    // Posteriors.
    for (std::size_t i = 0; i < num_clusters; ++i) {
      drift_post_[i] = drift_posterior(drift_prior_[i], models[i], obs[i]);
    }
    for (std::size_t i = 0; i < num_anom; ++i) {
      if (pulled[i] || pushed[i]) {
        anomaly_post_[i] = anomaly_posterior_success(static_cast<NodeId>(i), cfg.aoii_cap);
      } else {
        anomaly_post_[i] = anomaly_prior_[i];
      }
    }
    if (cfg.policy.push == PushPolicy::Pps && push > 0 && num_anom > 0) {
      update_anomaly_beliefs_pps(outcome, threshold, pulled, pushed);
    }

    // DT resets.
    for (std::size_t i = 0; i < num_clusters; ++i) {
      if (drift_risk(drift_post_[i], models[i]) > cfg.frame.reset_confidence) {
        cluster_state_[i] = models[i].initial_state();
        drift_post_[i] = DriftBelief::point_mass(i, models[i].num_states(),
                                                 models[i].initial_state());
        log.resets.push_back(i);
        ++ledger_.resets;
      }
    }

    // AoII samples, after resets and before the world moves on.
    log.psi.resize(num_clusters);
    for (std::size_t i = 0; i < num_clusters; ++i) {
      psi_[i] = models[i].is_drift(cluster_state_[i]) ? psi_[i] + 1 : 0;
      log.psi[i] = psi_[i];
      ledger_.psi.add(psi_[i]);
    }
    log.theta.resize(num_anom);
    for (std::size_t i = 0; i < num_anom; ++i) {
      const std::uint32_t theta = anomalies_.aoii(static_cast<NodeId>(i));
      log.theta[i] = theta;
      ledger_.theta.add(theta);
    }

    if (cfg.policy.push == PushPolicy::Afsa && push > 0 && !cfg.fsa_p_tx_override) {
      fsa_ = afsa_update(fsa_, outcome.collisions, outcome.empty(), push, cfg.fsa.adapt_step);
    }
    for (std::size_t n = 0; n < age_.size(); ++n) {
      age_[n] = reported_[n] ? 0 : age_[n] + 1;
    }
  } catch (const InconsistencyError& e) {
    std::ostringstream os;
    os << "frame " << frame_ << " (pull=" << to_string(cfg.policy.pull)
       << ", push=" << to_string(cfg.policy.push)
       << ", alloc=" << to_string(cfg.policy.alloc) << "): " << e.what();
    throw InconsistencyError(os.str());
  }
  ++ledger_.frames;
  ++frame_;
  return log;
}

const MetricsLedger& Episode::finish() {
  ledger_.still_active = 0;
  for (NodeId n : ctx_.topology().anomaly_nodes) {
    if (anomalies_.active(n) && !reported_[n]) ++ledger_.still_active;
  }
  return ledger_;
}

// ---------------------------------------------------------------------------
// Monte Carlo

std::uint64_t episode_seed(std::uint64_t master, std::size_t episode) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(episode),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(episode) >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

MetricsLedger run_episode(const SimContext& context, std::size_t episode,
                          const FrameObserver& observer) {
  Episode ep(context, episode_seed(context.config().seed, episode));
  for (std::size_t k = 0; k < context.config().frames; ++k) {
    FrameLog log = ep.run_frame();
    if (observer) observer(ep, log);
  }
  return ep.finish();
}

Summary run_monte_carlo(const SimContext& context, std::size_t workers,
                        const FrameObserver& first_episode_observer) {
  const std::size_t episodes = context.config().episodes;
  std::vector<MetricsLedger> results(episodes);
  workers = std::clamp<std::size_t>(workers, 1, episodes);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t e = next.fetch_add(1);
      if (e >= episodes) return;
      try {
        results[e] = run_episode(context, e, e == 0 ? first_episode_observer : FrameObserver{});
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = episodes;
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  MetricsLedger pooled;
  for (const auto& r : results) pooled.merge(r);
  return summarize(pooled, context.config().frame.frame_duration_s);
}

}  // namespace pushpull
