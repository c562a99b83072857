// Static network description, workload configuration and the feature
// construction shared by the simulator, the policies and the critics.

#ifndef SDNRD_NET_MODEL_HPP_
#define SDNRD_NET_MODEL_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdnrd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// N switches, M controllers. latency(m, n) is the one-way propagation delay
// between controller m and switch n in seconds; capacities are in pkt/s.
struct Topology {
  Index num_switches = 0;
  Index num_controllers = 0;
  VectorXd capacities;  // M
  MatrixXd latency;     // M x N
  std::vector<std::string> switch_ids;
  std::vector<std::string> controller_ids;
  // Relative request-generation weights per switch (uniform when absent).
  VectorXd arrival_weights;  // N
  // Switch-to-switch one-way latency, only needed by the centralized agent.
  std::optional<MatrixXd> switch_latency;  // N x N

  double total_capacity() const { return capacities.sum(); }
  double max_latency() const { return latency.size() ? latency.maxCoeff() : 0.0; }

  // Throws ConfigError when any invariant is violated.
  void validate() const;
};

Topology load_topology(const std::filesystem::path& path);
Topology parse_topology(const std::string& json_text);
std::string topology_to_json(const Topology& topology);

struct WorkloadSpec {
  VectorXd arrival_rates;  // N, pkt/s
  double load_fraction = 0.0;

  double total_rate() const { return arrival_rates.sum(); }
};

// Spreads load_fraction * sum(capacities) across switches by arrival weight.
WorkloadSpec make_workload(const Topology& topology, double load_fraction);
void validate_workload(const Topology& topology, const WorkloadSpec& workload);

// What the agents can see of the network at the start of a time step.
// Queue lengths come from controller beacons and may be stale.
struct TelemetrySnapshot {
  Index history_length = 3;
  Index recorded_steps = 0;         // number of completed steps so far
  MatrixXd arrival_history;         // H x N, pkt/s, most recent step last
  VectorXd queue_lengths;           // M, requests at the controller
  MatrixXd sent_prev;               // M x N, requests sent n -> m last step
  VectorXd recv_prev;               // M, requests received by m last step

  static TelemetrySnapshot empty(Index history_length, Index num_switches,
                                 Index num_controllers);
};

struct Observation {
  VectorXd arrival_history;  // H
  double capacity = 0.0;
  double latency = 0.0;
  double queue_length = 0.0;
  double sent_prev = 0.0;
  double recv_prev = 0.0;
  // True when fewer than H steps have been recorded and zeros were padded in.
  bool history_padded = false;
};

struct GlobalState {
  VectorXd plane_arrival_history;  // H
  VectorXd capacities;             // M
  VectorXd queue_lengths;          // M
  VectorXd latency_flat;           // M*N, column-major (controller fastest)
};

// Divisors that bring raw telemetry to O(1) network inputs. Rates use the
// total control-plane capacity, per-step counts are converted to rates first.
struct FeatureScaling {
  double rate_scale = 1.0;
  double latency_scale = 1.0;
  double queue_scale = 1000.0;
  double step_duration = 1.0;

  static FeatureScaling for_topology(const Topology& topology,
                                     double step_duration,
                                     double reference_queue = 1000.0);
};

Observation build_observation(const Topology& topology, Index agent,
                              Index controller,
                              const TelemetrySnapshot& telemetry);

// Observation of a single agent that dispatches for every switch from the
// location of switch `location`: totals over the data plane, latency from
// the agent's site.
Observation build_central_observation(const Topology& topology, Index location,
                                      Index controller,
                                      const TelemetrySnapshot& telemetry);

GlobalState build_global_state(const Topology& topology,
                               const TelemetrySnapshot& telemetry);

inline Index observation_size(Index history_length) { return history_length + 5; }

VectorXd observation_features(const Observation& obs,
                              const FeatureScaling& scaling);

// Feature matrix for one agent: column m is the feature vector of controller m.
MatrixXd agent_features(const Topology& topology, Index agent,
                        const TelemetrySnapshot& telemetry,
                        const FeatureScaling& scaling);
MatrixXd central_agent_features(const Topology& topology, Index location,
                                const TelemetrySnapshot& telemetry,
                                const FeatureScaling& scaling);

VectorXd global_state_features(const GlobalState& state,
                               const FeatureScaling& scaling);
inline Index global_state_size(Index history_length, Index num_switches,
                               Index num_controllers) {
  return history_length + 2 * num_controllers + num_controllers * num_switches;
}

// Switch that minimizes the mean propagation latency to all controllers.
Index central_agent_location(const Topology& topology);

// One-way switch-to-switch latency: `switch_latency` when given, otherwise
// the shortest relay through any controller site.
MatrixXd switch_to_switch_latency(const Topology& topology);

// Delay of a request that travels switch -> central agent -> controller.
MatrixXd central_outbound_latency(const Topology& topology, Index location);

}  // namespace sdnrd

#endif  // SDNRD_NET_MODEL_HPP_
