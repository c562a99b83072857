// Discrete-event simulator of the SDN control plane: Poisson request
// generation at switches, probabilistic dispatching, FIFO single-server
// controllers and response delivery back to the requesting switch.

#ifndef SDNRD_SIM_ENGINE_HPP_
#define SDNRD_SIM_ENGINE_HPP_

#include "sdnrd/net_model.hpp"

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <random>
#include <vector>

namespace sdnrd {

using Rng = std::mt19937_64;

enum class EventKind : std::uint8_t {
  RequestArrivalAtSwitch = 0,
  RequestArrivalAtController = 1,
  ServiceCompletion = 2,
  ResponseArrivalAtSwitch = 3,
  StepBoundary = 4,  // sorts after every same-timestamp event
};

const char* to_string(EventKind kind);

struct Event {
  double time = 0.0;
  std::uint64_t seq = 0;
  std::uint64_t request = 0;
  double send_time = 0.0;
  std::int32_t switch_id = -1;
  std::int32_t controller = -1;
  EventKind kind = EventKind::StepBoundary;
  bool warmup = false;
};

// Min-heap order on (time, kind, seq).
struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    return a.seq > b.seq;
  }
};

enum class ServiceDistribution { Exponential, Deterministic };

struct SimConfig {
  double step_duration = 1.0;  // seconds
  ServiceDistribution service = ServiceDistribution::Exponential;
  Index history_length = 3;
  Index beacon_interval = 1;  // steps between controller queue beacons
  double weight_factor = 0.0;  // reward weight on throughput (seconds)
  bool record_response_times = true;
};

// Per-switch dispatching rule for one step. Column n of `probabilities` is
// the distribution over controllers used by switch n. With `rotate` set,
// switches cycle through controllers by smooth weighted round robin using
// the column as weights instead of sampling.
struct DispatchPlan {
  MatrixXd probabilities;  // M x N
  bool rotate = false;
};

struct StepOutcome {
  Eigen::VectorXi responses;                      // X_t^n
  std::vector<std::vector<double>> response_times;  // tau lists per switch
  VectorXd response_time_sums;                    // sum of tau per switch
  VectorXd rewards;                               // r_t^n
  VectorXd utilization;                           // busy fraction per controller
  Eigen::VectorXi processed;                      // completions per controller
  Index step_index = 0;
  double start_time = 0.0;
  double end_time = 0.0;
};

// Request accounting across every event boundary.
struct SimCounters {
  std::uint64_t generated = 0;
  std::uint64_t to_controller = 0;  // in flight switch -> controller
  std::uint64_t queued = 0;         // waiting at a controller
  std::uint64_t in_service = 0;
  std::uint64_t to_switch = 0;  // response in flight controller -> switch
  std::uint64_t delivered = 0;
};

class Simulator {
 public:
  Simulator(Topology topology, SimConfig config);

  // Empty network, zeroed telemetry, fresh Poisson streams from `seed`.
  void reset_episode(const WorkloadSpec& workload, std::uint64_t seed);

  // Runs the network under `plan` for `duration` seconds (in whole steps,
  // the last one possibly shorter). Requests generated here never count
  // toward any StepOutcome.
  void warm_up(const DispatchPlan& plan, double duration);

  StepOutcome run_step(const DispatchPlan& plan, double duration);
  StepOutcome run_step(const DispatchPlan& plan) {
    return run_step(plan, config_.step_duration);
  }

  const TelemetrySnapshot& telemetry() const { return telemetry_; }
  const Topology& topology() const { return topology_; }
  const SimConfig& config() const { return config_; }
  const WorkloadSpec& workload() const { return workload_; }
  const SimCounters& counters() const { return counters_; }
  double now() const { return now_; }
  Index steps_completed() const { return steps_completed_; }

  // Requests currently at each controller (queued plus in service).
  VectorXd queue_lengths() const;

  // Replace switch -> controller delays, e.g. to route through a central
  // agent. Responses still travel on `topology.latency`.
  void set_outbound_latency(const MatrixXd& latency);

  void set_weight_factor(double weight_factor) { config_.weight_factor = weight_factor; }

  // Write every processed event as CSV (time,kind,switch,controller,request).
  void set_trace(std::ostream* out);

  // FIFO check: service start order per controller equals arrival order.
  bool fifo_violated() const { return fifo_violated_; }

 private:
  struct Pending {
    std::uint64_t request;
    std::uint64_t arrival_index;  // position in this controller's arrival order
    double send_time;
    std::int32_t switch_id;
    bool warmup;
  };
  struct ControllerState {
    std::deque<Pending> queue;
    bool busy = false;
    double service_start = 0.0;
    std::uint64_t arrivals = 0;
    std::uint64_t starts = 0;
  };

  StepOutcome advance(const DispatchPlan& plan, double duration, bool warmup);
  void push(Event e);
  void schedule_next_arrival(std::int32_t sw);
  std::int32_t choose_controller(std::int32_t sw, const DispatchPlan& plan);
  void start_service(std::int32_t m, double t);
  void trace(const Event& e);
  void validate_plan(const DispatchPlan& plan) const;

  // Events of one kind on one link. Link delays are constant, so each
  // channel is filled in nondecreasing time order.
  class Channel {
   public:
    bool empty() const { return head_ == items_.size(); }
    const Event& front() const { return items_[head_]; }
    const Event& back() const { return items_.back(); }
    void push_back(const Event& e) { items_.push_back(e); }
    void pop_front() {
      if (++head_ == items_.size()) {
        items_.clear();
        head_ = 0;
      } else if (head_ >= 1024 && head_ * 2 >= items_.size()) {
        items_.erase(items_.begin(), items_.begin() + static_cast<std::ptrdiff_t>(head_));
        head_ = 0;
      }
    }
    void clear() {
      items_.clear();
      head_ = 0;
    }

   private:
    std::vector<Event> items_;
    std::size_t head_ = 0;
  };

  // Head of a non-empty channel; ordered by (time, kind, seq).
  struct HeadKey {
    double time;
    std::uint64_t tie;  // kind in the top bits, seq below
    std::size_t channel;
    bool operator<(const HeadKey& o) const {
      return time < o.time || (time == o.time && tie < o.tie);
    }
  };
  static HeadKey head_key(const Event& e, std::size_t channel);

  std::size_t channel_of(const Event& e) const;
  void heap_sift_up(std::size_t i);
  void heap_sift_down(std::size_t i);
  Event pop_next();

  Topology topology_;
  SimConfig config_;
  WorkloadSpec workload_;
  MatrixXd outbound_latency_;
  Rng rng_;
  std::vector<Channel> channels_;
  std::vector<HeadKey> heap_;
  std::vector<ControllerState> controllers_;
  SimCounters counters_;
  TelemetrySnapshot telemetry_;
  MatrixXd rotation_credit_;  // smooth weighted round robin state, M x N
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_request_ = 0;
  double now_ = 0.0;
  Index steps_completed_ = 0;
  bool warmup_active_ = false;
  bool fifo_violated_ = false;
  std::ostream* trace_ = nullptr;

  // Per-step accumulators.
  VectorXd step_arrivals_;    // N
  MatrixXd step_sent_;        // M x N
  VectorXd step_received_;    // M
  VectorXd step_busy_;        // M
  Eigen::VectorXi step_processed_;
  double step_start_ = 0.0;
};

// Weighted response count minus the summed response times of one agent.
inline double step_reward(double weight_factor, Index responses, double response_time_sum) {
  return weight_factor * static_cast<double>(responses) - response_time_sum;
}

}  // namespace sdnrd

#endif  // SDNRD_SIM_ENGINE_HPP_
