#include "sdnrd/net_model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sdnrd {

namespace {

using nlohmann::json;

VectorXd read_vector(const json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string(key) + ": expected an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(key) + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

MatrixXd read_matrix(const json& j, const char* key) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(std::string(key) + ": expected a non-empty array of rows");
  }
  const Index rows = static_cast<Index>(j.size());
  const Index cols = j[0].is_array() ? static_cast<Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const VectorXd row = read_vector(j[r], key);
    if (row.size() != cols) throw ConfigError("dimension mismatch in " + std::string(key));
    m.row(r) = row.transpose();
  }
  return m;
}

std::vector<std::string> default_ids(const char* prefix, Index n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (Index i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  return ids;
}

json to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const MatrixXd& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) a.push_back(to_json(VectorXd(m.row(r).transpose())));
  return a;
}

}  // namespace

void Topology::validate() const {
  if (num_switches <= 0) throw ConfigError("num_switches must be positive");
  if (num_controllers <= 0) throw ConfigError("num_controllers must be positive");
  if (capacities.size() != num_controllers) {
    throw ConfigError("dimension mismatch: capacities has " +
                      std::to_string(capacities.size()) + " entries, expected " +
                      std::to_string(num_controllers));
  }
  if (latency.rows() != num_controllers || latency.cols() != num_switches) {
    throw ConfigError("dimension mismatch: latency must be num_controllers x num_switches");
  }
  for (Index m = 0; m < num_controllers; ++m) {
    if (!(capacities[m] > 0.0) || !std::isfinite(capacities[m])) {
      throw ConfigError("non-positive capacity for controller " + std::to_string(m));
    }
  }
  if (!latency.allFinite() || (latency.array() < 0.0).any()) {
    throw ConfigError("latency entries must be finite and non-negative");
  }
  if (static_cast<Index>(switch_ids.size()) != num_switches ||
      static_cast<Index>(controller_ids.size()) != num_controllers) {
    throw ConfigError("dimension mismatch: identifier lists");
  }
  if (arrival_weights.size() != num_switches) {
    throw ConfigError("dimension mismatch: arrival_weights");
  }
  if ((arrival_weights.array() < 0.0).any() || !(arrival_weights.sum() > 0.0)) {
    throw ConfigError("arrival_weights must be non-negative with a positive sum");
  }
  if (switch_latency) {
    if (switch_latency->rows() != num_switches || switch_latency->cols() != num_switches) {
      throw ConfigError("dimension mismatch: switch_latency must be num_switches x num_switches");
    }
    if (!switch_latency->allFinite() || (switch_latency->array() < 0.0).any()) {
      throw ConfigError("switch_latency entries must be finite and non-negative");
    }
  }
}

Topology parse_topology(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("parse error: topology must be an object");
  for (const char* key : {"num_switches", "num_controllers", "capacities", "latency"}) {
    if (!j.contains(key)) throw ConfigError(std::string("missing key: ") + key);
  }

  Topology t;
  t.num_switches = j.at("num_switches").get<Index>();
  t.num_controllers = j.at("num_controllers").get<Index>();
  t.capacities = read_vector(j.at("capacities"), "capacities");
  t.latency = read_matrix(j.at("latency"), "latency");
  t.switch_ids = j.contains("switch_ids") ? j["switch_ids"].get<std::vector<std::string>>()
                                          : default_ids("sw", t.num_switches);
  t.controller_ids = j.contains("controller_ids")
                         ? j["controller_ids"].get<std::vector<std::string>>()
                         : default_ids("c", t.num_controllers);
  t.arrival_weights = j.contains("arrival_weights")
                          ? read_vector(j["arrival_weights"], "arrival_weights")
                          : VectorXd::Ones(std::max<Index>(t.num_switches, 0));
  if (j.contains("switch_latency")) {
    t.switch_latency = read_matrix(j["switch_latency"], "switch_latency");
  }
  t.validate();
  return t;
}

Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open topology file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_topology(buf.str());
}

std::string topology_to_json(const Topology& t) {
  json j;
  j["num_switches"] = t.num_switches;
  j["num_controllers"] = t.num_controllers;
  j["capacities"] = to_json(t.capacities);
  j["latency"] = to_json(t.latency);
  j["switch_ids"] = t.switch_ids;
  j["controller_ids"] = t.controller_ids;
  j["arrival_weights"] = to_json(t.arrival_weights);
  if (t.switch_latency) j["switch_latency"] = to_json(*t.switch_latency);
  return j.dump(2);
}

WorkloadSpec make_workload(const Topology& topology, double load_fraction) {
  if (!(load_fraction >= 0.0 && load_fraction < 1.0)) {
    throw ConfigError("load_fraction must lie in [0, 1)");
  }
  WorkloadSpec w;
  w.load_fraction = load_fraction;
  w.arrival_rates = topology.arrival_weights / topology.arrival_weights.sum() *
                    (load_fraction * topology.total_capacity());
  return w;
}

void validate_workload(const Topology& topology, const WorkloadSpec& workload) {
  if (workload.arrival_rates.size() != topology.num_switches) {
    throw ConfigError("dimension mismatch: arrival_rates");
  }
  if ((workload.arrival_rates.array() < 0.0).any() || !workload.arrival_rates.allFinite()) {
    throw ConfigError("arrival rates must be finite and non-negative");
  }
  if (!(workload.total_rate() < topology.total_capacity())) {
    throw ConfigError("unstable workload: total arrival rate must be below total capacity");
  }
}

TelemetrySnapshot TelemetrySnapshot::empty(Index history_length, Index num_switches,
                                           Index num_controllers) {
  TelemetrySnapshot t;
  t.history_length = history_length;
  t.recorded_steps = 0;
  t.arrival_history = MatrixXd::Zero(history_length, num_switches);
  t.queue_lengths = VectorXd::Zero(num_controllers);
  t.sent_prev = MatrixXd::Zero(num_controllers, num_switches);
  t.recv_prev = VectorXd::Zero(num_controllers);
  return t;
}

FeatureScaling FeatureScaling::for_topology(const Topology& topology,
                                            double step_duration,
                                            double reference_queue) {
  FeatureScaling s;
  s.rate_scale = topology.total_capacity();
  const double max_d = topology.max_latency();
  s.latency_scale = max_d > 0.0 ? max_d : 1.0;
  s.queue_scale = reference_queue;
  s.step_duration = step_duration;
  return s;
}

Observation build_observation(const Topology& topology, Index agent, Index controller,
                              const TelemetrySnapshot& telemetry) {
  Observation obs;
  obs.arrival_history = telemetry.arrival_history.col(agent);
  obs.history_padded = telemetry.recorded_steps < telemetry.history_length;
  obs.capacity = topology.capacities[controller];
  obs.latency = topology.latency(controller, agent);
  obs.queue_length = telemetry.queue_lengths[controller];
  obs.sent_prev = telemetry.sent_prev(controller, agent);
  obs.recv_prev = telemetry.recv_prev[controller];
  return obs;
}

Observation build_central_observation(const Topology& topology, Index location,
                                      Index controller,
                                      const TelemetrySnapshot& telemetry) {
  Observation obs;
  obs.arrival_history = telemetry.arrival_history.rowwise().sum();
  obs.history_padded = telemetry.recorded_steps < telemetry.history_length;
  obs.capacity = topology.capacities[controller];
  obs.latency = topology.latency(controller, location);
  obs.queue_length = telemetry.queue_lengths[controller];
  obs.sent_prev = telemetry.sent_prev.row(controller).sum();
  obs.recv_prev = telemetry.recv_prev[controller];
  return obs;
}

GlobalState build_global_state(const Topology& topology,
                               const TelemetrySnapshot& telemetry) {
  GlobalState s;
  s.plane_arrival_history = telemetry.arrival_history.rowwise().sum();
  s.capacities = topology.capacities;
  s.queue_lengths = telemetry.queue_lengths;
  s.latency_flat = topology.latency.reshaped();
  return s;
}

VectorXd observation_features(const Observation& obs, const FeatureScaling& scaling) {
  const Index h = obs.arrival_history.size();
  const double count_scale = scaling.rate_scale * scaling.step_duration;
  VectorXd f(h + 5);
  f.head(h) = obs.arrival_history / scaling.rate_scale;
  f[h] = obs.capacity / scaling.rate_scale;
  f[h + 1] = obs.latency / scaling.latency_scale;
  f[h + 2] = obs.queue_length / scaling.queue_scale;
  f[h + 3] = obs.sent_prev / count_scale;
  f[h + 4] = obs.recv_prev / count_scale;
  return f;
}

MatrixXd agent_features(const Topology& topology, Index agent,
                        const TelemetrySnapshot& telemetry,
                        const FeatureScaling& scaling) {
  MatrixXd z(observation_size(telemetry.history_length), topology.num_controllers);
  for (Index m = 0; m < topology.num_controllers; ++m) {
    z.col(m) = observation_features(build_observation(topology, agent, m, telemetry), scaling);
  }
  return z;
}

MatrixXd central_agent_features(const Topology& topology, Index location,
                                const TelemetrySnapshot& telemetry,
                                const FeatureScaling& scaling) {
  MatrixXd z(observation_size(telemetry.history_length), topology.num_controllers);
  for (Index m = 0; m < topology.num_controllers; ++m) {
    z.col(m) = observation_features(
        build_central_observation(topology, location, m, telemetry), scaling);
  }
  return z;
}

VectorXd global_state_features(const GlobalState& s, const FeatureScaling& scaling) {
  const Index h = s.plane_arrival_history.size();
  const Index m = s.capacities.size();
  const Index d = s.latency_flat.size();
  VectorXd f(h + 2 * m + d);
  f.head(h) = s.plane_arrival_history / scaling.rate_scale;
  f.segment(h, m) = s.capacities / scaling.rate_scale;
  f.segment(h + m, m) = s.queue_lengths / scaling.queue_scale;
  f.tail(d) = s.latency_flat / scaling.latency_scale;
  return f;
}

Index central_agent_location(const Topology& topology) {
  Index best = 0;
  topology.latency.colwise().mean().minCoeff(&best);
  return best;
}

MatrixXd switch_to_switch_latency(const Topology& topology) {
  if (topology.switch_latency) return *topology.switch_latency;
  const Index n = topology.num_switches;
  MatrixXd s(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      s(i, j) = i == j ? 0.0 : (topology.latency.col(i) + topology.latency.col(j)).minCoeff();
    }
  }
  return s;
}

MatrixXd central_outbound_latency(const Topology& topology, Index location) {
  const MatrixXd hop = switch_to_switch_latency(topology);
  MatrixXd out(topology.num_controllers, topology.num_switches);
  for (Index m = 0; m < topology.num_controllers; ++m) {
    for (Index n = 0; n < topology.num_switches; ++n) {
      out(m, n) = hop(n, location) + topology.latency(m, location);
    }
  }
  return out;
}

}  // namespace sdnrd
