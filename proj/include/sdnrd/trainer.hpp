// Multi-agent PPO with a centralized critic (MAPPO), its independent
// learner variant (SA_PPO_MA) and a single centralized dispatcher (CENTRAL).
//
// Training iteration: collect on-policy episodes (one per training load),
// compute GAE advantages from the critic(s), fit the critic(s) on the value
// targets, then run clipped policy-gradient epochs for every agent.

#ifndef SDNRD_TRAINER_HPP_
#define SDNRD_TRAINER_HPP_

#include "sdnrd/baselines.hpp"
#include "sdnrd/dispatcher.hpp"
#include "sdnrd/policy.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>

namespace sdnrd {

enum class TrainMode { Mappo, SaPpoMa, Central };

const char* to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

// Scope over which advantages are standardized to mean 0, std 1.
enum class AdvantageNormalization { None, Iteration, Episode };

const char* to_string(AdvantageNormalization scope);
AdvantageNormalization parse_advantage_normalization(const std::string& name);

struct TrainerConfig {
  double gamma = 0.9;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double learning_rate = 3e-4;
  Index minibatch = 40;
  Index epochs = 8;
  Index iterations = 100;
  Index steps_per_episode = 60;
  std::vector<double> training_loads{0.5, 0.8};
  double step_duration = 1.0;
  double warmup_duration = 30.0;
  double exploration_std = 0.01;
  Index history_length = 3;
  std::vector<Index> hidden{64, 64};
  // Per episode keeps the high-load episode's larger returns from drowning
  // out the low-load one.
  AdvantageNormalization advantage_normalization = AdvantageNormalization::Episode;
  // Reward weight on throughput in seconds; <= 0 calibrates it from CWRR.
  double weight_factor = 0.0;
  Index max_candidates = 0;           // 0 = every controller
  double queue_threshold = 0.0;       // requests; <= 0 uses the default rule
  double reference_queue = 1000.0;
  Index beacon_interval = 1;
  ServiceDistribution service = ServiceDistribution::Exponential;

  void validate() const;
  SimConfig sim_config() const;
  PolicyConfig policy_config(bool explore) const;
};

// Learned parameters of one run.
struct AgentSet {
  TrainMode mode = TrainMode::Mappo;
  PolicyConfig policy_config;
  std::vector<Network> policies;  // one per switch, or one for CENTRAL
  std::vector<Network> critics;   // one shared, or one per switch for SA_PPO_MA
};

AgentSet make_agents(const Topology& topology, const TrainerConfig& config, TrainMode mode,
                     Rng& rng);

struct TransitionSample {
  VectorXd state;
  VectorXd next_state;
  std::vector<MatrixXd> observations;       // per agent, features x M
  std::vector<MatrixXd> next_observations;
  std::vector<VectorXd> priorities;         // a_t per agent
  std::vector<double> behavior_log_prob;    // log pi_old(a_t | z_t) per agent
  VectorXd rewards;                         // learner-scale reward per agent
  bool episode_end = false;
  double load_fraction = 0.0;
};

struct RolloutBuffer {
  std::vector<TransitionSample> samples;
  std::vector<Index> episode_starts;
  // One entry per critic.
  std::vector<VectorXd> advantages;
  std::vector<VectorXd> value_targets;
  bool advantages_ready = false;

  void clear() { *this = RolloutBuffer{}; }
};

// Per-episode response statistics.
struct EpisodeStats {
  double load_fraction = 0.0;
  Index responses = 0;
  double mean_response_time = 0.0;
  double median_response_time = 0.0;
  double p95_response_time = 0.0;
  double throughput = 0.0;  // responses per simulated second
  double reward_sum = 0.0;  // raw rewards summed over agents and steps
  VectorXd utilization;     // mean busy fraction per controller
  bool unstable = false;    // a controller queue kept growing
};

// One-step Bellman residual V(s) - R - gamma V(s').
inline double bellman_residual(double value, double joint_reward, double gamma, double next_value) {
  return value - joint_reward - gamma * next_value;
}

// A_t = delta_t + gamma*lambda*A_{t+1}, delta_t = r_t + gamma V(s_{t+1}) - V(s_t),
// with the recursion cut after every episode_end.
VectorXd compute_gae(const VectorXd& rewards, const VectorXd& values, const VectorXd& next_values,
                     const std::vector<bool>& episode_end, double gamma, double lambda);

// Critic inputs for every sample, and each critic's reward series.
MatrixXd critic_inputs(const RolloutBuffer& buffer, TrainMode mode, Index critic);
VectorXd critic_rewards(const RolloutBuffer& buffer, TrainMode mode, Index critic);

// Fills buffer.advantages / value_targets for every critic.
void compute_advantages(RolloutBuffer& buffer, const AgentSet& agents, const TrainerConfig& config);

// Minibatch Adam on the mean squared error to `targets`; returns the mean
// loss of the final epoch.
double update_value(Network& critic, const MatrixXd& inputs, const VectorXd& targets,
                    const TrainerConfig& config, Rng& rng);

struct PolicySample {
  MatrixXd observations;
  VectorXd priorities;
  double old_log_prob = 0.0;
  double advantage = 0.0;
};

struct SurrogateStats {
  Index used = 0;
  Index clipped = 0;
  Index skipped = 0;  // non-finite ratio
};

// (1/|B|) sum min(rho A, clip(rho, 1-eps, 1+eps) A)
double clipped_surrogate(const Network& policy, std::span<const PolicySample> batch,
                         double clip, double sigma);

// Gradient of the clipped surrogate: A rho grad log pi for samples whose
// ratio is inside the unclipped region, zero otherwise, averaged over |B|.
Gradient surrogate_gradient(const Network& policy, std::span<const PolicySample> batch,
                            double clip, double sigma, SurrogateStats* stats = nullptr);

struct PolicyUpdateStats {
  SurrogateStats last_epoch;
  Index skipped_total = 0;
  double clip_fraction = 0.0;
};

PolicyUpdateStats update_policy(Network& policy, std::span<const PolicySample> samples,
                                const TrainerConfig& config, Rng& rng);

// Samples of agent `agent` with the advantages of the critic that serves it.
std::vector<PolicySample> policy_samples(const RolloutBuffer& buffer, TrainMode mode, Index agent);

// Runs one episode: reset, CWRR warm-up, then steps_per_episode policy
// steps. Appends transitions to `buffer` when given.
EpisodeStats run_episode(Simulator& sim, const AgentSet& agents, const TrainerConfig& config,
                         double load_fraction, std::uint64_t episode_seed, bool explore, Rng& rng,
                         RolloutBuffer* buffer);

// Same protocol with a fixed dispatch plan for every step.
EpisodeStats run_static_episode(Simulator& sim, const DispatchPlan& plan,
                                const TrainerConfig& config, double load_fraction,
                                std::uint64_t episode_seed);

// Variant whose plan is chosen once the warm-up has run, e.g. from the
// arrival rates measured by telemetry.
using PlanAfterWarmUp = std::function<DispatchPlan(const Simulator&)>;
EpisodeStats run_static_episode(Simulator& sim, const PlanAfterWarmUp& plan_for,
                                const TrainerConfig& config, double load_fraction,
                                std::uint64_t episode_seed);

RolloutBuffer collect_rollout(Simulator& sim, const AgentSet& agents, const TrainerConfig& config,
                              Index iteration, std::uint64_t seed, Rng& rng,
                              std::vector<EpisodeStats>* stats = nullptr);

// Simulator prepared for `mode` (outbound routing via the central agent for CENTRAL).
Simulator make_simulator(const Topology& topology, const TrainerConfig& config, TrainMode mode);

// Long-run mean response time of CWRR at 50% load.
double calibrate_weight_factor(const Topology& topology, const TrainerConfig& config,
                               std::uint64_t seed);

struct IterationMetrics {
  Index iteration = 0;
  std::vector<EpisodeStats> episodes;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  Index skipped_samples = 0;
};

struct TrainResult {
  AgentSet initial;
  AgentSet agents;
  std::vector<IterationMetrics> metrics;
  double weight_factor = 0.0;
};

using IterationHook = std::function<void(Index iteration, const AgentSet& agents)>;

TrainResult train(const TrainerConfig& config, const Topology& topology, TrainMode mode,
                  std::uint64_t seed, const IterationHook& hook = {});

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace sdnrd

#endif  // SDNRD_TRAINER_HPP_
