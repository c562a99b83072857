#include "sdnrd/dispatcher.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace sdnrd {

CandidateList build_candidates(const VectorXd& latency_to_agent, const VectorXd& queue_lengths,
                               const CandidateRule& rule) {
  const Index m_count = latency_to_agent.size();
  if (m_count == 0 || queue_lengths.size() != m_count) {
    throw std::invalid_argument("candidate inputs must cover every controller");
  }
  if (rule.max_candidates < 0) throw std::invalid_argument("max_candidates must be >= 0");
  const Index chi = rule.max_candidates == 0 ? m_count : std::min(rule.max_candidates, m_count);

  std::vector<Index> order(m_count);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return latency_to_agent[a] < latency_to_agent[b];
  });

  CandidateList out;
  out.mask = Eigen::VectorXi::Zero(m_count);
  Index kept = 0;
  for (Index m : order) {
    if (kept == chi) break;
    if (rule.queue_threshold > 0.0 && queue_lengths[m] >= rule.queue_threshold) continue;
    out.mask[m] = 1;
    ++kept;
  }
  if (kept == 0) {
    out.mask[order.front()] = 1;
    out.fallback = true;
  }
  return out;
}

CandidateList build_candidates(const Topology& topology, Index agent,
                               const TelemetrySnapshot& telemetry, const CandidateRule& rule) {
  return build_candidates(VectorXd(topology.latency.col(agent)), telemetry.queue_lengths, rule);
}

VectorXd map_to_probabilities(const VectorXd& priorities, const CandidateList& candidates) {
  if (priorities.size() != candidates.mask.size()) throw std::invalid_argument("dimension mismatch");
  if (candidates.count() == 0) throw std::invalid_argument("empty candidate set");
  const VectorXd mask = candidates.mask.cast<double>();
  // NaN priorities are treated as zero.
  VectorXd filtered = priorities.unaryExpr([](double a) { return a > 0.0 ? a : 0.0; });
  filtered = filtered.cwiseProduct(mask);
  const double total = filtered.sum();
  if (!(total > 0.0) || !std::isfinite(total)) return mask / mask.sum();
  return filtered / total;
}

double default_queue_threshold(const Topology& topology, const VectorXd& arrival_rates,
                               double step_duration) {
  const double per_controller =
      arrival_rates.sum() * step_duration / static_cast<double>(topology.num_controllers);
  return 10.0 * per_controller;
}

}  // namespace sdnrd
