// Turns a policy action into per-switch dispatching probabilities:
// controller filtering by a candidate list, then the mapping T
// (clamp to non-negative, mask, renormalize).

#ifndef SDNRD_DISPATCHER_HPP_
#define SDNRD_DISPATCHER_HPP_

#include "sdnrd/net_model.hpp"

namespace sdnrd {

struct CandidateList {
  Eigen::VectorXi mask;  // 1 = candidate
  bool fallback = false;  // every controller was over threshold

  Index count() const { return mask.sum(); }
};

struct CandidateRule {
  Index max_candidates = 0;  // chi; 0 means all controllers
  double queue_threshold = 0.0;  // requests; <= 0 disables the queue filter
};

// Drops controllers whose reported queue length is at or above the threshold
// and keeps the `max_candidates` nearest of the rest (ties by index). When
// nothing survives, the single nearest controller is used.
CandidateList build_candidates(const VectorXd& latency_to_agent, const VectorXd& queue_lengths,
                               const CandidateRule& rule);
CandidateList build_candidates(const Topology& topology, Index agent,
                               const TelemetrySnapshot& telemetry, const CandidateRule& rule);

// p = max(a, 0) * L / sum(...); uniform over candidates when the sum is zero.
VectorXd map_to_probabilities(const VectorXd& priorities, const CandidateList& candidates);

// Queue threshold default: ten times the mean per-controller offered load
// of one step.
double default_queue_threshold(const Topology& topology, const VectorXd& arrival_rates,
                               double step_duration);

}  // namespace sdnrd

#endif  // SDNRD_DISPATCHER_HPP_
