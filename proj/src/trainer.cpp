#include "sdnrd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sdnrd {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Mappo: return "MAPPO";
    case TrainMode::SaPpoMa: return "SA_PPO_MA";
    case TrainMode::Central: return "CENTRAL";
  }
  return "unknown";
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "MAPPO") return TrainMode::Mappo;
  if (name == "SA_PPO_MA") return TrainMode::SaPpoMa;
  if (name == "CENTRAL") return TrainMode::Central;
  throw ConfigError("unknown training mode: " + name);
}

const char* to_string(AdvantageNormalization scope) {
  switch (scope) {
    case AdvantageNormalization::None: return "none";
    case AdvantageNormalization::Iteration: return "iteration";
    case AdvantageNormalization::Episode: return "episode";
  }
  return "?";
}

AdvantageNormalization parse_advantage_normalization(const std::string& name) {
  if (name == "none") return AdvantageNormalization::None;
  if (name == "iteration") return AdvantageNormalization::Iteration;
  if (name == "episode") return AdvantageNormalization::Episode;
  throw ConfigError("unknown advantage normalization: " + name);
}

void TrainerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (minibatch < 1 || epochs < 0 || iterations < 0 || steps_per_episode < 1) {
    throw ConfigError("minibatch/epochs/iterations/steps_per_episode out of range");
  }
  if (training_loads.empty()) throw ConfigError("at least one training load is required");
  for (double l : training_loads) {
    if (!(l > 0.0 && l < 1.0)) throw ConfigError("training loads must lie in (0, 1)");
  }
  if (!(step_duration > 0.0) || warmup_duration < 0.0) throw ConfigError("durations out of range");
  if (!(exploration_std > 0.0)) throw ConfigError("exploration_std must be positive");
  if (history_length < 1) throw ConfigError("history_length must be >= 1");
  if (max_candidates < 0) throw ConfigError("max_candidates must be >= 0");
  if (beacon_interval < 1) throw ConfigError("beacon_interval must be >= 1");
}

SimConfig TrainerConfig::sim_config() const {
  SimConfig s;
  s.step_duration = step_duration;
  s.service = service;
  s.history_length = history_length;
  s.beacon_interval = beacon_interval;
  s.weight_factor = weight_factor;
  return s;
}

PolicyConfig TrainerConfig::policy_config(bool explore) const {
  return PolicyConfig{exploration_std, explore, history_length};
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

AgentSet make_agents(const Topology& topology, const TrainerConfig& config, TrainMode mode,
                     Rng& rng) {
  AgentSet a;
  a.mode = mode;
  a.policy_config = config.policy_config(true);
  const Index n_policies = mode == TrainMode::Central ? 1 : topology.num_switches;
  for (Index n = 0; n < n_policies; ++n) {
    a.policies.push_back(make_priority_network(config.history_length, rng, config.hidden));
  }
  const Index obs = observation_size(config.history_length);
  const Index state = global_state_size(config.history_length, topology.num_switches,
                                        topology.num_controllers);
  auto critic = [&](Index inputs) {
    std::vector<Index> sizes{inputs};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(1);
    return Network::orthogonal(sizes, std::sqrt(2.0), 1.0, rng);
  };
  if (mode == TrainMode::SaPpoMa) {
    for (Index n = 0; n < topology.num_switches; ++n) {
      a.critics.push_back(critic(obs * topology.num_controllers));
    }
  } else {
    a.critics.push_back(critic(state));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Advantages and critic

VectorXd compute_gae(const VectorXd& rewards, const VectorXd& values, const VectorXd& next_values,
                     const std::vector<bool>& episode_end, double gamma, double lambda) {
  const Index t_count = rewards.size();
  if (values.size() != t_count || next_values.size() != t_count ||
      static_cast<Index>(episode_end.size()) != t_count) {
    throw std::invalid_argument("GAE inputs must have equal length");
  }
  VectorXd adv(t_count);
  double running = 0.0;
  for (Index t = t_count; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_values[t] - values[t];
    if (episode_end[t]) running = 0.0;
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

namespace {

VectorXd flatten_observation(const MatrixXd& obs) { return obs.reshaped(); }

}  // namespace

MatrixXd critic_inputs(const RolloutBuffer& buffer, TrainMode mode, Index critic) {
  const auto& s = buffer.samples;
  if (s.empty()) return {};
  const bool local = mode == TrainMode::SaPpoMa;
  const Index dim = local ? s.front().observations[critic].size() : s.front().state.size();
  MatrixXd x(dim, static_cast<Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    x.col(static_cast<Index>(i)) = local ? flatten_observation(s[i].observations[critic]) : s[i].state;
  }
  return x;
}

namespace {

MatrixXd critic_next_inputs(const RolloutBuffer& buffer, TrainMode mode, Index critic) {
  const auto& s = buffer.samples;
  const bool local = mode == TrainMode::SaPpoMa;
  const Index dim = local ? s.front().next_observations[critic].size() : s.front().next_state.size();
  MatrixXd x(dim, static_cast<Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    x.col(static_cast<Index>(i)) =
        local ? flatten_observation(s[i].next_observations[critic]) : s[i].next_state;
  }
  return x;
}

}  // namespace

VectorXd critic_rewards(const RolloutBuffer& buffer, TrainMode mode, Index critic) {
  VectorXd r(static_cast<Index>(buffer.samples.size()));
  for (std::size_t i = 0; i < buffer.samples.size(); ++i) {
    const auto& rewards = buffer.samples[i].rewards;
    // Centralized critic: the joint reward of all agents.
    r[static_cast<Index>(i)] = mode == TrainMode::SaPpoMa ? rewards[critic] : rewards.sum();
  }
  return r;
}

namespace {

template <typename V>
void standardize(V&& v) {
  if (v.size() < 2) return;
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().mean());
  v = ((v.array() - mean) / (sd + 1e-8)).matrix();
}

}  // namespace

void compute_advantages(RolloutBuffer& buffer, const AgentSet& agents, const TrainerConfig& config) {
  buffer.advantages.clear();
  buffer.value_targets.clear();
  std::vector<bool> ends;
  for (const auto& s : buffer.samples) ends.push_back(s.episode_end);
  for (std::size_t c = 0; c < agents.critics.size(); ++c) {
    const auto idx = static_cast<Index>(c);
    const Network& critic = agents.critics[c];
    const VectorXd values = forward_batch(critic, critic_inputs(buffer, agents.mode, idx)).row(0).transpose();
    const VectorXd next_values =
        forward_batch(critic, critic_next_inputs(buffer, agents.mode, idx)).row(0).transpose();
    VectorXd adv = compute_gae(critic_rewards(buffer, agents.mode, idx), values, next_values, ends,
                               config.gamma, config.gae_lambda);
    buffer.value_targets.push_back(adv + values);
    switch (config.advantage_normalization) {
      case AdvantageNormalization::None:
        break;
      case AdvantageNormalization::Iteration:
        standardize(adv);
        break;
      case AdvantageNormalization::Episode: {
        std::vector<Index> bounds = buffer.episode_starts;
        if (bounds.empty() || bounds.front() != 0) bounds.insert(bounds.begin(), 0);
        bounds.push_back(adv.size());
        for (std::size_t e = 0; e + 1 < bounds.size(); ++e) {
          auto segment = adv.segment(bounds[e], bounds[e + 1] - bounds[e]);
          standardize(segment);
        }
        break;
      }
    }
    buffer.advantages.push_back(std::move(adv));
  }
  buffer.advantages_ready = true;
}

namespace {

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

double update_value(Network& critic, const MatrixXd& inputs, const VectorXd& targets,
                    const TrainerConfig& config, Rng& rng) {
  const Index n = inputs.cols();
  if (targets.size() != n) throw std::invalid_argument("one value target per input");
  if (n == 0) return 0.0;
  const AdamConfig adam{config.learning_rate};
  double epoch_loss = 0.0;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    double sum = 0.0;
    for (Index start = 0; start < n; start += config.minibatch) {
      const Index b = std::min(config.minibatch, n - start);
      MatrixXd x(inputs.rows(), b);
      VectorXd y(b);
      for (Index k = 0; k < b; ++k) {
        x.col(k) = inputs.col(order[start + k]);
        y[k] = targets[order[start + k]];
      }
      const VectorXd residual = forward_batch(critic, x).row(0).transpose() - y;
      const double loss = residual.squaredNorm() / static_cast<double>(b);
      if (!std::isfinite(loss)) throw std::domain_error("non-finite value loss");
      sum += residual.squaredNorm();
      const Gradient g = backward_weighted(critic, x, VectorXd(2.0 * residual / static_cast<double>(b)));
      adam_update(critic, g, adam);
    }
    epoch_loss = sum / static_cast<double>(n);
  }
  if (config.epochs == 0) {
    epoch_loss = (forward_batch(critic, inputs).row(0).transpose() - targets).squaredNorm() /
                 static_cast<double>(n);
  }
  return epoch_loss;
}

// ---------------------------------------------------------------------------
// Policy

double clipped_surrogate(const Network& policy, std::span<const PolicySample> batch, double clip,
                         double sigma) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : batch) {
    const double ratio = std::exp(log_prob(policy, s.observations, s.priorities, sigma) - s.old_log_prob);
    const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
    total += std::min(ratio * s.advantage, clipped * s.advantage);
  }
  return total / static_cast<double>(batch.size());
}

Gradient surrogate_gradient(const Network& policy, std::span<const PolicySample> batch,
                            double clip, double sigma, SurrogateStats* stats) {
  SurrogateStats local;
  if (batch.empty()) {
    if (stats) *stats = local;
    return policy.zero_gradient();
  }
  // All options of all active samples go through one batched backward pass.
  std::vector<const PolicySample*> active;
  std::vector<VectorXd> weights;
  Index columns = 0;
  for (const auto& s : batch) {
    const VectorXd mu = policy_means(policy, s.observations);
    const double ratio = std::exp(gaussian_log_density(s.priorities, mu, sigma) - s.old_log_prob);
    if (!std::isfinite(ratio)) {
      ++local.skipped;
      continue;
    }
    const bool inside = (s.advantage > 0.0 && ratio < 1.0 + clip) ||
                        (s.advantage < 0.0 && ratio > 1.0 - clip);
    if (!inside) {
      if (s.advantage != 0.0) ++local.clipped;
      continue;
    }
    ++local.used;
    active.push_back(&s);
    weights.push_back(s.advantage * ratio * logpi_output_weights(s.priorities, mu, sigma));
    columns += s.observations.cols();
  }
  Gradient g = policy.zero_gradient();
  if (!active.empty()) {
    MatrixXd x(policy.input_size(), columns);
    VectorXd w(columns);
    Index c = 0;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Index m = active[i]->observations.cols();
      x.middleCols(c, m) = active[i]->observations;
      w.segment(c, m) = weights[i];
      c += m;
    }
    g = backward_weighted(policy, x, w);
    g *= 1.0 / static_cast<double>(batch.size());
  }
  if (stats) *stats = local;
  return g;
}

PolicyUpdateStats update_policy(Network& policy, std::span<const PolicySample> samples,
                                const TrainerConfig& config, Rng& rng) {
  PolicyUpdateStats out;
  const Index n = static_cast<Index>(samples.size());
  if (n == 0) return out;
  const AdamConfig adam{config.learning_rate};
  std::vector<PolicySample> batch;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(n, rng);
    SurrogateStats epoch_stats;
    for (Index start = 0; start < n; start += config.minibatch) {
      const Index b = std::min(config.minibatch, n - start);
      batch.clear();
      for (Index k = 0; k < b; ++k) batch.push_back(samples[order[start + k]]);
      SurrogateStats st;
      Gradient g = surrogate_gradient(policy, batch, config.clip, config.exploration_std, &st);
      epoch_stats.used += st.used;
      epoch_stats.clipped += st.clipped;
      epoch_stats.skipped += st.skipped;
      out.skipped_total += st.skipped;
      if (st.used == 0) continue;
      // Ascent on the surrogate.
      g *= -1.0;
      adam_update(policy, g, adam);
    }
    out.last_epoch = epoch_stats;
  }
  out.clip_fraction = static_cast<double>(out.last_epoch.clipped) / static_cast<double>(n);
  return out;
}

std::vector<PolicySample> policy_samples(const RolloutBuffer& buffer, TrainMode mode, Index agent) {
  if (!buffer.advantages_ready) throw std::logic_error("advantages must be computed before policy updates");
  const std::size_t critic = mode == TrainMode::SaPpoMa ? static_cast<std::size_t>(agent) : 0;
  std::vector<PolicySample> out;
  out.reserve(buffer.samples.size());
  for (std::size_t i = 0; i < buffer.samples.size(); ++i) {
    const auto& s = buffer.samples[i];
    out.push_back(PolicySample{s.observations[agent], s.priorities[agent], s.behavior_log_prob[agent],
                               buffer.advantages[critic][static_cast<Index>(i)]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts

Simulator make_simulator(const Topology& topology, const TrainerConfig& config, TrainMode mode) {
  Simulator sim(topology, config.sim_config());
  if (mode == TrainMode::Central) {
    sim.set_outbound_latency(central_outbound_latency(topology, central_agent_location(topology)));
  }
  return sim;
}

namespace {

struct View {
  std::vector<MatrixXd> observations;
  VectorXd state;
};

View observe(const Simulator& sim, TrainMode mode, Index agents, const FeatureScaling& scaling) {
  const Topology& topo = sim.topology();
  const auto& tel = sim.telemetry();
  View v;
  if (mode == TrainMode::Central) {
    v.observations.push_back(central_agent_features(topo, central_agent_location(topo), tel, scaling));
  } else {
    for (Index n = 0; n < agents; ++n) v.observations.push_back(agent_features(topo, n, tel, scaling));
  }
  v.state = global_state_features(build_global_state(topo, tel), scaling);
  return v;
}

DispatchPlan plan_from_actions(const Simulator& sim, TrainMode mode,
                               const std::vector<Action>& actions, const CandidateRule& rule) {
  const Topology& topo = sim.topology();
  DispatchPlan plan;
  plan.probabilities.resize(topo.num_controllers, topo.num_switches);
  if (mode == TrainMode::Central) {
    const Index loc = central_agent_location(topo);
    const VectorXd p = map_to_probabilities(
        actions[0].priorities, build_candidates(topo, loc, sim.telemetry(), rule));
    plan.probabilities = p.replicate(1, topo.num_switches);
  } else {
    for (Index n = 0; n < topo.num_switches; ++n) {
      plan.probabilities.col(n) = map_to_probabilities(
          actions[n].priorities, build_candidates(topo, n, sim.telemetry(), rule));
    }
  }
  return plan;
}

struct ResponseCollector {
  std::vector<double> taus;
  Index responses = 0;
  double sum = 0.0;
  double reward_sum = 0.0;
  VectorXd utilization;
  Index steps = 0;
  double duration = 0.0;

  void add(const StepOutcome& out) {
    for (const auto& list : out.response_times) taus.insert(taus.end(), list.begin(), list.end());
    responses += out.responses.sum();
    sum += out.response_time_sums.sum();
    reward_sum += out.rewards.sum();
    if (utilization.size() == 0) utilization = VectorXd::Zero(out.utilization.size());
    utilization += out.utilization;
    ++steps;
    duration += out.end_time - out.start_time;
  }

  EpisodeStats finish(const Simulator& sim, double load) {
    EpisodeStats s;
    s.load_fraction = load;
    s.responses = responses;
    s.mean_response_time = responses > 0 ? sum / static_cast<double>(responses) : 0.0;
    if (!taus.empty()) {
      std::sort(taus.begin(), taus.end());
      const std::size_t n = taus.size();
      s.median_response_time = n % 2 ? taus[n / 2] : 0.5 * (taus[n / 2 - 1] + taus[n / 2]);
      const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
      s.p95_response_time = taus[std::max<std::size_t>(rank, 1) - 1];
    }
    s.throughput = duration > 0.0 ? static_cast<double>(responses) / duration : 0.0;
    s.reward_sum = reward_sum;
    s.utilization = steps > 0 ? VectorXd(utilization / static_cast<double>(steps))
                              : VectorXd::Zero(sim.topology().num_controllers);
    const VectorXd q = sim.queue_lengths();
    for (Index m = 0; m < q.size(); ++m) {
      if (q[m] > sim.topology().capacities[m] * sim.config().step_duration) s.unstable = true;
    }
    return s;
  }
};

CandidateRule candidate_rule(const Topology& topology, const TrainerConfig& config,
                             const WorkloadSpec& workload) {
  CandidateRule rule;
  rule.max_candidates = config.max_candidates;
  rule.queue_threshold = config.queue_threshold > 0.0
                             ? config.queue_threshold
                             : default_queue_threshold(topology, workload.arrival_rates,
                                                       config.step_duration);
  return rule;
}

// Per-switch rewards divided by this are O(1): a weight-factor's worth of
// time for each agent's share of the total capacity.
double reward_scale(const Simulator& sim, const TrainerConfig& config) {
  const double wf = sim.config().weight_factor;
  const double base = (wf > 0.0 ? wf : 1.0) * sim.topology().total_capacity() * config.step_duration /
                      static_cast<double>(sim.topology().num_switches);
  return base > 0.0 ? base : 1.0;
}

}  // namespace

EpisodeStats run_episode(Simulator& sim, const AgentSet& agents, const TrainerConfig& config,
                         double load_fraction, std::uint64_t episode_seed, bool explore, Rng& rng,
                         RolloutBuffer* buffer) {
  const Topology& topo = sim.topology();
  const WorkloadSpec workload = make_workload(topo, load_fraction);
  sim.reset_episode(workload, episode_seed);
  sim.warm_up(cwrr_policy(topo).plan(), config.warmup_duration);

  const FeatureScaling scaling =
      FeatureScaling::for_topology(topo, config.step_duration, config.reference_queue);
  const CandidateRule rule = candidate_rule(topo, config, workload);
  PolicyConfig pcfg = agents.policy_config;
  pcfg.explore = explore;
  const Index n_agents = static_cast<Index>(agents.policies.size());
  if (agents.mode != TrainMode::Central && n_agents != topo.num_switches) {
    throw ConfigError("policy count does not match the number of switches");
  }
  const double scale = reward_scale(sim, config);
  if (buffer) buffer->episode_starts.push_back(static_cast<Index>(buffer->samples.size()));

  ResponseCollector collector;
  View view = observe(sim, agents.mode, n_agents, scaling);
  for (Index t = 0; t < config.steps_per_episode; ++t) {
    std::vector<Action> actions;
    actions.reserve(n_agents);
    for (Index n = 0; n < n_agents; ++n) {
      actions.push_back(act(agents.policies[n], view.observations[n], pcfg, rng));
    }
    const StepOutcome out = sim.run_step(plan_from_actions(sim, agents.mode, actions, rule));
    collector.add(out);
    View next = observe(sim, agents.mode, n_agents, scaling);
    if (buffer) {
      TransitionSample s;
      s.state = view.state;
      s.next_state = next.state;
      s.observations = view.observations;
      s.next_observations = next.observations;
      s.load_fraction = load_fraction;
      s.episode_end = t + 1 == config.steps_per_episode;
      for (Index n = 0; n < n_agents; ++n) {
        s.priorities.push_back(actions[n].priorities);
        s.behavior_log_prob.push_back(
            gaussian_log_density(actions[n].priorities, actions[n].means, pcfg.exploration_std));
      }
      if (agents.mode == TrainMode::Central) {
        s.rewards = VectorXd::Constant(1, out.rewards.sum() / scale);
      } else {
        s.rewards = out.rewards / scale;
      }
      buffer->samples.push_back(std::move(s));
    }
    view = std::move(next);
  }
  return collector.finish(sim, load_fraction);
}

EpisodeStats run_static_episode(Simulator& sim, const DispatchPlan& plan,
                                const TrainerConfig& config, double load_fraction,
                                std::uint64_t episode_seed) {
  const Topology& topo = sim.topology();
  sim.reset_episode(make_workload(topo, load_fraction), episode_seed);
  sim.warm_up(cwrr_policy(topo).plan(), config.warmup_duration);
  ResponseCollector collector;
  for (Index t = 0; t < config.steps_per_episode; ++t) collector.add(sim.run_step(plan));
  return collector.finish(sim, load_fraction);
}

EpisodeStats run_static_episode(Simulator& sim, const PlanAfterWarmUp& plan_for,
                                const TrainerConfig& config, double load_fraction,
                                std::uint64_t episode_seed) {
  const Topology& topo = sim.topology();
  sim.reset_episode(make_workload(topo, load_fraction), episode_seed);
  sim.warm_up(cwrr_policy(topo).plan(), config.warmup_duration);
  const DispatchPlan plan = plan_for(sim);
  ResponseCollector collector;
  for (Index t = 0; t < config.steps_per_episode; ++t) collector.add(sim.run_step(plan));
  return collector.finish(sim, load_fraction);
}

RolloutBuffer collect_rollout(Simulator& sim, const AgentSet& agents, const TrainerConfig& config,
                              Index iteration, std::uint64_t seed, Rng& rng,
                              std::vector<EpisodeStats>* stats) {
  RolloutBuffer buffer;
  for (std::size_t e = 0; e < config.training_loads.size(); ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, static_cast<std::uint64_t>(iteration), e);
    EpisodeStats st = run_episode(sim, agents, config, config.training_loads[e], episode_seed,
                                  true, rng, &buffer);
    if (stats) stats->push_back(std::move(st));
  }
  return buffer;
}

double calibrate_weight_factor(const Topology& topology, const TrainerConfig& config,
                               std::uint64_t seed) {
  TrainerConfig c = config;
  Simulator sim(topology, c.sim_config());
  const EpisodeStats st = run_static_episode(sim, cwrr_policy(topology).plan(), c, 0.5,
                                             derive_seed(seed, 0xC0FFEEu));
  if (!(st.mean_response_time > 0.0)) throw std::runtime_error("weight-factor calibration produced no responses");
  return st.mean_response_time;
}

TrainResult train(const TrainerConfig& config_in, const Topology& topology, TrainMode mode,
                  std::uint64_t seed, const IterationHook& hook) {
  config_in.validate();
  TrainerConfig config = config_in;
  TrainResult result;
  result.weight_factor = config.weight_factor > 0.0
                             ? config.weight_factor
                             : calibrate_weight_factor(topology, config, seed);
  config.weight_factor = result.weight_factor;

  Rng rng(derive_seed(seed, 0x1A17u));
  result.agents = make_agents(topology, config, mode, rng);
  result.initial = result.agents;
  if (hook) hook(0, result.agents);

  Simulator sim = make_simulator(topology, config, mode);
  for (Index ti = 0; ti < config.iterations; ++ti) {
    IterationMetrics metrics;
    metrics.iteration = ti + 1;
    RolloutBuffer buffer = collect_rollout(sim, result.agents, config, ti, seed, rng, &metrics.episodes);
    compute_advantages(buffer, result.agents, config);

    double loss = 0.0;
    for (std::size_t c = 0; c < result.agents.critics.size(); ++c) {
      const auto idx = static_cast<Index>(c);
      loss += update_value(result.agents.critics[c], critic_inputs(buffer, mode, idx),
                           buffer.value_targets[c], config, rng);
    }
    metrics.value_loss = loss / static_cast<double>(result.agents.critics.size());

    double clip_fraction = 0.0;
    for (std::size_t n = 0; n < result.agents.policies.size(); ++n) {
      const auto samples = policy_samples(buffer, mode, static_cast<Index>(n));
      const PolicyUpdateStats st = update_policy(result.agents.policies[n], samples, config, rng);
      clip_fraction += st.clip_fraction;
      metrics.skipped_samples += st.skipped_total;
    }
    metrics.clip_fraction = clip_fraction / static_cast<double>(result.agents.policies.size());
    result.metrics.push_back(std::move(metrics));
    if (hook) hook(ti + 1, result.agents);
  }
  return result;
}

}  // namespace sdnrd
