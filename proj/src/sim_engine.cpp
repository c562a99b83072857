#include "sdnrd/sim_engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace sdnrd {

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::RequestArrivalAtSwitch: return "arrival_switch";
    case EventKind::RequestArrivalAtController: return "arrival_controller";
    case EventKind::ServiceCompletion: return "service_completion";
    case EventKind::ResponseArrivalAtSwitch: return "response_switch";
    case EventKind::StepBoundary: return "step_boundary";
  }
  return "unknown";
}

Simulator::Simulator(Topology topology, SimConfig config)
    : topology_(std::move(topology)), config_(config) {
  topology_.validate();
  if (config_.history_length < 1) throw ConfigError("history_length must be >= 1");
  if (config_.beacon_interval < 1) throw ConfigError("beacon_interval must be >= 1");
  if (!(config_.step_duration > 0.0)) throw ConfigError("step_duration must be positive");
  outbound_latency_ = topology_.latency;
  reset_episode(make_workload(topology_, 0.0), 0);
}

void Simulator::set_outbound_latency(const MatrixXd& latency) {
  if (latency.rows() != topology_.num_controllers || latency.cols() != topology_.num_switches) {
    throw std::invalid_argument("outbound latency must be num_controllers x num_switches");
  }
  if ((latency.array() < 0.0).any()) throw std::invalid_argument("negative latency");
  outbound_latency_ = latency;
}

void Simulator::set_trace(std::ostream* out) {
  trace_ = out;
  if (trace_) *trace_ << "time,kind,switch,controller,request\n";
}

void Simulator::reset_episode(const WorkloadSpec& workload, std::uint64_t seed) {
  validate_workload(topology_, workload);
  workload_ = workload;
  rng_.seed(seed);
  const std::size_t n_sw = static_cast<std::size_t>(topology_.num_switches);
  const std::size_t n_c = static_cast<std::size_t>(topology_.num_controllers);
  channels_.assign(n_sw + 2 * n_c * n_sw + n_c + 1, Channel{});
  heap_.clear();
  controllers_.assign(topology_.num_controllers, ControllerState{});
  counters_ = SimCounters{};
  telemetry_ = TelemetrySnapshot::empty(config_.history_length, topology_.num_switches,
                                        topology_.num_controllers);
  rotation_credit_ = MatrixXd::Zero(topology_.num_controllers, topology_.num_switches);
  next_seq_ = 0;
  next_request_ = 0;
  now_ = 0.0;
  steps_completed_ = 0;
  warmup_active_ = false;
  fifo_violated_ = false;
  for (std::int32_t n = 0; n < topology_.num_switches; ++n) schedule_next_arrival(n);
}

VectorXd Simulator::queue_lengths() const {
  VectorXd q(topology_.num_controllers);
  for (Index m = 0; m < topology_.num_controllers; ++m) {
    const auto& c = controllers_[m];
    q[m] = static_cast<double>(c.queue.size()) + (c.busy ? 1.0 : 0.0);
  }
  return q;
}

std::size_t Simulator::channel_of(const Event& e) const {
  const auto n_sw = static_cast<std::size_t>(topology_.num_switches);
  const auto n_c = static_cast<std::size_t>(topology_.num_controllers);
  const auto link = static_cast<std::size_t>(e.controller) * n_sw + static_cast<std::size_t>(e.switch_id);
  switch (e.kind) {
    case EventKind::RequestArrivalAtSwitch: return static_cast<std::size_t>(e.switch_id);
    case EventKind::RequestArrivalAtController: return n_sw + link;
    case EventKind::ServiceCompletion: return n_sw + n_c * n_sw + static_cast<std::size_t>(e.controller);
    case EventKind::ResponseArrivalAtSwitch: return n_sw + n_c * n_sw + n_c + link;
    case EventKind::StepBoundary: return n_sw + 2 * n_c * n_sw + n_c;
  }
  return 0;
}

Simulator::HeadKey Simulator::head_key(const Event& e, std::size_t channel) {
  return {e.time, (static_cast<std::uint64_t>(e.kind) << 58) | e.seq, channel};
}

void Simulator::heap_sift_up(std::size_t i) {
  const HeadKey item = heap_[i];
  while (i > 0) {
    const std::size_t parent = (i - 1) / 2;
    if (!(item < heap_[parent])) break;
    heap_[i] = heap_[parent];
    i = parent;
  }
  heap_[i] = item;
}

void Simulator::heap_sift_down(std::size_t i) {
  const std::size_t size = heap_.size();
  const HeadKey item = heap_[i];
  while (true) {
    std::size_t child = 2 * i + 1;
    if (child >= size) break;
    if (child + 1 < size && heap_[child + 1] < heap_[child]) ++child;
    if (!(heap_[child] < item)) break;
    heap_[i] = heap_[child];
    i = child;
  }
  heap_[i] = item;
}

void Simulator::push(Event e) {
  e.seq = next_seq_++;
  const std::size_t ch = channel_of(e);
  Channel& c = channels_[ch];
  if (c.empty()) {
    c.push_back(e);
    heap_.push_back(head_key(e, ch));
    heap_sift_up(heap_.size() - 1);
  } else {
    if (EventLater{}(c.back(), e)) throw std::logic_error("event channel out of time order");
    c.push_back(e);
  }
}

Event Simulator::pop_next() {
  const std::size_t ch = heap_.front().channel;
  Channel& c = channels_[ch];
  const Event e = c.front();
  c.pop_front();
  if (c.empty()) {
    heap_.front() = heap_.back();
    heap_.pop_back();
  } else {
    heap_.front() = head_key(c.front(), ch);
  }
  if (!heap_.empty()) heap_sift_down(0);
  return e;
}

void Simulator::schedule_next_arrival(std::int32_t sw) {
  const double rate = workload_.arrival_rates[sw];
  if (!(rate > 0.0)) return;
  Event e;
  e.time = now_ + std::exponential_distribution<double>(rate)(rng_);
  e.kind = EventKind::RequestArrivalAtSwitch;
  e.switch_id = sw;
  push(e);
}

std::int32_t Simulator::choose_controller(std::int32_t sw, const DispatchPlan& plan) {
  const auto column = plan.probabilities.col(sw);
  const Index num = column.size();
  if (plan.rotate) {
    auto credit = rotation_credit_.col(sw);
    credit += column;
    Index pick = 0;
    credit.maxCoeff(&pick);
    credit[pick] -= column.sum();
    return static_cast<std::int32_t>(pick);
  }
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
  double acc = 0.0;
  Index last_positive = 0;
  for (Index m = 0; m < num; ++m) {
    if (column[m] <= 0.0) continue;
    acc += column[m];
    last_positive = m;
    if (u < acc) return static_cast<std::int32_t>(m);
  }
  return static_cast<std::int32_t>(last_positive);
}

void Simulator::start_service(std::int32_t m, double t) {
  auto& c = controllers_[m];
  const Pending p = c.queue.front();
  c.queue.pop_front();
  if (p.arrival_index != c.starts) fifo_violated_ = true;
  ++c.starts;
  --counters_.queued;
  ++counters_.in_service;
  c.busy = true;
  c.service_start = t;
  const double rate = topology_.capacities[m];
  const double service = config_.service == ServiceDistribution::Exponential
                             ? std::exponential_distribution<double>(rate)(rng_)
                             : 1.0 / rate;
  Event e;
  e.time = t + service;
  e.kind = EventKind::ServiceCompletion;
  e.request = p.request;
  e.switch_id = p.switch_id;
  e.controller = m;
  e.send_time = p.send_time;
  e.warmup = p.warmup;
  push(e);
}

void Simulator::trace(const Event& e) {
  *trace_ << e.time << ',' << to_string(e.kind) << ',' << e.switch_id << ',' << e.controller
          << ',' << e.request << '\n';
}

void Simulator::validate_plan(const DispatchPlan& plan) const {
  const auto& p = plan.probabilities;
  if (p.rows() != topology_.num_controllers || p.cols() != topology_.num_switches) {
    throw std::invalid_argument("dispatch plan must be num_controllers x num_switches");
  }
  if (!p.allFinite() || (p.array() < 0.0).any()) {
    throw std::invalid_argument("dispatch probabilities must be finite and non-negative");
  }
  for (Index n = 0; n < p.cols(); ++n) {
    const double s = p.col(n).sum();
    if (plan.rotate ? !(s > 0.0) : std::abs(s - 1.0) > 1e-9) {
      throw std::invalid_argument("dispatch probabilities for switch " + std::to_string(n) +
                                  " are not normalized");
    }
  }
}

void Simulator::warm_up(const DispatchPlan& plan, double duration) {
  if (duration < 0.0) throw std::invalid_argument("negative warm-up duration");
  double remaining = duration;
  while (remaining > 1e-12) {
    const double d = std::min(config_.step_duration, remaining);
    advance(plan, d, true);
    remaining -= d;
  }
}

StepOutcome Simulator::run_step(const DispatchPlan& plan, double duration) {
  if (duration < 0.0) throw std::invalid_argument("negative step duration");
  return advance(plan, duration, false);
}

StepOutcome Simulator::advance(const DispatchPlan& plan, double duration, bool warmup) {
  validate_plan(plan);
  const Index n_sw = topology_.num_switches;
  const Index n_c = topology_.num_controllers;

  StepOutcome out;
  out.responses = Eigen::VectorXi::Zero(n_sw);
  out.response_times.assign(n_sw, {});
  out.response_time_sums = VectorXd::Zero(n_sw);
  out.step_index = steps_completed_;
  out.start_time = now_;
  out.end_time = now_ + duration;

  warmup_active_ = warmup;
  step_start_ = now_;
  step_arrivals_ = VectorXd::Zero(n_sw);
  step_sent_ = MatrixXd::Zero(n_c, n_sw);
  step_received_ = VectorXd::Zero(n_c);
  step_busy_ = VectorXd::Zero(n_c);
  step_processed_ = Eigen::VectorXi::Zero(n_c);

  Event boundary;
  boundary.time = out.end_time;
  boundary.kind = EventKind::StepBoundary;
  push(boundary);

  while (true) {
    const Event e = pop_next();
    now_ = e.time;
    if (trace_) trace(e);
    if (e.kind == EventKind::StepBoundary) break;

    switch (e.kind) {
      case EventKind::RequestArrivalAtSwitch: {
        const std::int32_t sw = e.switch_id;
        const std::int32_t m = choose_controller(sw, plan);
        ++counters_.generated;
        ++counters_.to_controller;
        step_arrivals_[sw] += 1.0;
        step_sent_(m, sw) += 1.0;
        Event next;
        next.time = now_ + outbound_latency_(m, sw);
        next.kind = EventKind::RequestArrivalAtController;
        next.request = next_request_++;
        next.switch_id = sw;
        next.controller = m;
        next.send_time = now_;
        next.warmup = warmup;
        push(next);
        schedule_next_arrival(sw);
        break;
      }
      case EventKind::RequestArrivalAtController: {
        auto& c = controllers_[e.controller];
        --counters_.to_controller;
        ++counters_.queued;
        step_received_[e.controller] += 1.0;
        c.queue.push_back(Pending{e.request, c.arrivals++, e.send_time, e.switch_id, e.warmup});
        if (!c.busy) start_service(e.controller, now_);
        break;
      }
      case EventKind::ServiceCompletion: {
        auto& c = controllers_[e.controller];
        --counters_.in_service;
        ++counters_.to_switch;
        c.busy = false;
        step_busy_[e.controller] += now_ - std::max(c.service_start, step_start_);
        ++step_processed_[e.controller];
        Event resp = e;
        resp.time = now_ + topology_.latency(e.controller, e.switch_id);
        resp.kind = EventKind::ResponseArrivalAtSwitch;
        push(resp);
        if (!c.queue.empty()) start_service(e.controller, now_);
        break;
      }
      case EventKind::ResponseArrivalAtSwitch: {
        --counters_.to_switch;
        ++counters_.delivered;
        if (!e.warmup) {
          const double tau = now_ - e.send_time;
          ++out.responses[e.switch_id];
          out.response_time_sums[e.switch_id] += tau;
          if (config_.record_response_times) out.response_times[e.switch_id].push_back(tau);
        }
        break;
      }
      case EventKind::StepBoundary:
        break;
    }
  }

  for (Index m = 0; m < n_c; ++m) {
    const auto& c = controllers_[m];
    if (c.busy) step_busy_[m] += out.end_time - std::max(c.service_start, step_start_);
  }
  out.utilization = duration > 0.0 ? VectorXd(step_busy_ / duration) : VectorXd::Zero(n_c);
  out.processed = step_processed_;
  out.rewards.resize(n_sw);
  for (Index n = 0; n < n_sw; ++n) {
    out.rewards[n] =
        step_reward(config_.weight_factor, out.responses[n], out.response_time_sums[n]);
  }

  // Roll telemetry forward.
  auto& t = telemetry_;
  const Index h = t.history_length;
  if (h > 1) t.arrival_history.topRows(h - 1) = t.arrival_history.bottomRows(h - 1).eval();
  if (duration > 0.0) {
    t.arrival_history.row(h - 1) = (step_arrivals_ / duration).transpose();
  } else {
    t.arrival_history.row(h - 1).setZero();
  }
  t.sent_prev = step_sent_;
  t.recv_prev = step_received_;
  ++steps_completed_;
  t.recorded_steps = steps_completed_;
  if (steps_completed_ % config_.beacon_interval == 0) t.queue_lengths = queue_lengths();
  return out;
}

}  // namespace sdnrd
