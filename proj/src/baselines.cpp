#include "sdnrd/baselines.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace sdnrd {

VectorXd cwrr_probabilities(const Topology& topology) {
  return topology.capacities / topology.total_capacity();
}

StaticDispatchPolicy cwrr_policy(const Topology& topology, bool rotate) {
  StaticDispatchPolicy p;
  p.kind = StaticPolicyKind::Cwrr;
  p.probabilities = cwrr_probabilities(topology).replicate(1, topology.num_switches);
  p.rotate = rotate;
  return p;
}

StaticDispatchPolicy random_policy(const Topology& topology) {
  StaticDispatchPolicy p;
  p.kind = StaticPolicyKind::Random;
  p.probabilities = MatrixXd::Constant(topology.num_controllers, topology.num_switches,
                                       1.0 / static_cast<double>(topology.num_controllers));
  return p;
}

double gd_model_cost(const Topology& topology, const VectorXd& rates,
                     const MatrixXd& probabilities) {
  const VectorXd load = probabilities * rates;  // Lambda_m
  double cost = 0.0;
  for (Index m = 0; m < topology.num_controllers; ++m) {
    const double headroom = topology.capacities[m] - load[m];
    if (load[m] > 0.0 && !(headroom > 0.0)) return std::numeric_limits<double>::infinity();
    double propagation = 0.0;
    for (Index n = 0; n < topology.num_switches; ++n) {
      propagation += rates[n] * probabilities(m, n) * 2.0 * topology.latency(m, n);
    }
    cost += propagation + (load[m] > 0.0 ? load[m] / headroom : 0.0);
  }
  return cost;
}

MatrixXd gd_model_gradient(const Topology& topology, const VectorXd& rates,
                           const MatrixXd& probabilities) {
  const VectorXd load = probabilities * rates;
  MatrixXd g(topology.num_controllers, topology.num_switches);
  for (Index m = 0; m < topology.num_controllers; ++m) {
    const double headroom = topology.capacities[m] - load[m];
    // d/dLambda (Lambda / (alpha - Lambda)) = alpha / (alpha - Lambda)^2
    const double queueing = topology.capacities[m] / (headroom * headroom);
    for (Index n = 0; n < topology.num_switches; ++n) {
      g(m, n) = rates[n] * (2.0 * topology.latency(m, n) + queueing);
    }
  }
  return g;
}

VectorXd project_to_simplex(const VectorXd& v) {
  const Index n = v.size();
  VectorXd u = v;
  std::sort(u.data(), u.data() + n, std::greater<double>());
  double cumulative = 0.0, theta = 0.0;
  for (Index j = 0; j < n; ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0).matrix();
}

GdResult gd_dispatch(const Topology& topology, const VectorXd& estimated_rates,
                     const GdOptions& options) {
  if (estimated_rates.size() != topology.num_switches) throw std::invalid_argument("rate vector length");
  if ((estimated_rates.array() < 0.0).any() ||
      !(estimated_rates.sum() < topology.total_capacity())) {
    throw std::invalid_argument("infeasible workload: estimated rates exceed total capacity");
  }
  const Index n_sw = topology.num_switches;

  GdResult res;
  res.probabilities = cwrr_policy(topology).probabilities;
  res.cost = gd_model_cost(topology, estimated_rates, res.probabilities);
  res.cost_trace.push_back(res.cost);

  double step = options.step_size;
  for (Index it = 0; it < options.max_iterations; ++it) {
    const MatrixXd grad = gd_model_gradient(topology, estimated_rates, res.probabilities);
    // Per-switch scaling by 1/lambda_n keeps the step in seconds for every switch.
    MatrixXd direction = grad;
    for (Index n = 0; n < n_sw; ++n) {
      if (estimated_rates[n] > 0.0) direction.col(n) /= estimated_rates[n];
    }

    bool accepted = false;
    MatrixXd candidate(res.probabilities.rows(), n_sw);
    double candidate_cost = 0.0;
    step *= 2.0;
    while (step > 1e-16) {
      for (Index n = 0; n < n_sw; ++n) {
        candidate.col(n) = estimated_rates[n] > 0.0
                               ? project_to_simplex(res.probabilities.col(n) - step * direction.col(n))
                               : VectorXd(res.probabilities.col(n));
      }
      candidate_cost = gd_model_cost(topology, estimated_rates, candidate);
      const double predicted = (grad.array() * (candidate - res.probabilities).array()).sum();
      if (std::isfinite(candidate_cost) && candidate_cost <= res.cost + options.armijo * predicted) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    res.iterations = it + 1;
    if (!accepted) {
      res.converged = true;
      break;
    }
    const double moved = (candidate - res.probabilities).cwiseAbs().maxCoeff();
    res.probabilities = candidate;
    res.cost = candidate_cost;
    res.cost_trace.push_back(res.cost);
    if (moved < options.tolerance) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace sdnrd
