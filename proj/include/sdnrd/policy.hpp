// Adaptive dispatching policy: one shared priority network scores every
// controller, a softmax turns the scores into means on the simplex and
// Gaussian noise is added while training. Works for any controller count.

#ifndef SDNRD_POLICY_HPP_
#define SDNRD_POLICY_HPP_

#include "sdnrd/neural.hpp"
#include "sdnrd/sim_engine.hpp"

namespace sdnrd {

using Network = Mlp<double>;
using Gradient = MlpGradient<double>;

struct PolicyConfig {
  double exploration_std = 0.01;
  bool explore = true;
  Index history_length = 3;

  void validate() const {
    if (explore && !(exploration_std > 0.0)) {
      throw std::invalid_argument("exploration_std must be positive when exploring");
    }
  }
};

struct Action {
  VectorXd priorities;  // a = mu + eps
  VectorXd means;       // mu = softmax(f(z_1..z_M))
};

// Priority network input -> 64 -> 64 -> 1.
template <typename Urng>
Network make_priority_network(Index history_length, Urng& rng,
                              const std::vector<Index>& hidden = {64, 64}) {
  std::vector<Index> sizes{observation_size(history_length)};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return Network::orthogonal(sizes, std::sqrt(2.0), 0.01, rng);
}

// Softmax of the per-controller priorities; `observations` has one column
// per controller.
VectorXd policy_means(const Network& net, const MatrixXd& observations);

Action act(const Network& net, const MatrixXd& observations, const PolicyConfig& config,
           Rng& rng);

// Independent Gaussian product density of `priorities` around the current means.
double log_prob(const Network& net, const MatrixXd& observations, const VectorXd& priorities,
                double sigma);
double gaussian_log_density(const VectorXd& priorities, const VectorXd& means, double sigma);

// grad_theta log pi = (1/sigma^2) sum_m (a_m - mu_m) grad_theta mu_m.
// Evaluated as a single vector-Jacobian product through the priority network.
Gradient policy_gradient_logpi(const Network& net, const MatrixXd& observations,
                               const VectorXd& priorities, double sigma);

// Per-controller weights w with grad log pi = sum_m w_m grad f(z_m).
VectorXd logpi_output_weights(const VectorXd& priorities, const VectorXd& means, double sigma);

}  // namespace sdnrd

#endif  // SDNRD_POLICY_HPP_
