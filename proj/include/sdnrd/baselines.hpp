// Non-learned dispatchers: capacity-weighted round robin (CWRR), a uniform
// random reference and a model-based projected-gradient dispatcher (GD).

#ifndef SDNRD_BASELINES_HPP_
#define SDNRD_BASELINES_HPP_

#include "sdnrd/sim_engine.hpp"

namespace sdnrd {

enum class StaticPolicyKind { Cwrr, Random, Gd };

struct StaticDispatchPolicy {
  StaticPolicyKind kind = StaticPolicyKind::Cwrr;
  MatrixXd probabilities;  // M x N, column per switch
  bool rotate = false;

  DispatchPlan plan() const { return DispatchPlan{probabilities, rotate}; }
};

// p_m = alpha_m / sum(alpha), the same vector for every switch.
VectorXd cwrr_probabilities(const Topology& topology);
StaticDispatchPolicy cwrr_policy(const Topology& topology, bool rotate = false);
StaticDispatchPolicy random_policy(const Topology& topology);

struct GdOptions {
  double step_size = 1.0;       // initial trial step of the backtracking search
  Index max_iterations = 5000;
  double tolerance = 1e-10;     // stop when the projected step moves less than this
  double armijo = 1e-4;
};

struct GdResult {
  MatrixXd probabilities;  // M x N
  double cost = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // model cost after every accepted iterate
};

// sum_n sum_m lambda_n p_mn (2 D_mn + 1 / (alpha_m - Lambda_m)),
// Lambda_m = sum_n lambda_n p_mn; +inf when some controller is saturated.
double gd_model_cost(const Topology& topology, const VectorXd& rates,
                     const MatrixXd& probabilities);
MatrixXd gd_model_gradient(const Topology& topology, const VectorXd& rates,
                           const MatrixXd& probabilities);

// Euclidean projection of v onto the probability simplex.
VectorXd project_to_simplex(const VectorXd& v);

// Projected gradient descent on every switch's simplex, started from CWRR,
// with backtracking so each accepted iterate is stable and no worse.
GdResult gd_dispatch(const Topology& topology, const VectorXd& estimated_rates,
                     const GdOptions& options = {});

}  // namespace sdnrd

#endif  // SDNRD_BASELINES_HPP_
