#include "sdnrd/policy.hpp"

#include <numbers>

namespace sdnrd {

VectorXd policy_means(const Network& net, const MatrixXd& observations) {
  if (observations.cols() == 0) throw std::invalid_argument("policy needs at least one controller");
  return softmax(VectorXd(forward_batch(net, observations).row(0).transpose()));
}

Action act(const Network& net, const MatrixXd& observations, const PolicyConfig& config,
           Rng& rng) {
  config.validate();
  Action a;
  a.means = policy_means(net, observations);
  a.priorities = a.means;
  if (config.explore) {
    std::normal_distribution<double> noise(0.0, config.exploration_std);
    for (Index m = 0; m < a.priorities.size(); ++m) a.priorities[m] += noise(rng);
  }
  return a;
}

double gaussian_log_density(const VectorXd& priorities, const VectorXd& means, double sigma) {
  if (priorities.size() != means.size()) throw std::invalid_argument("action length mismatch");
  const double norm = -std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  const double quad = ((priorities - means) / sigma).squaredNorm();
  return static_cast<double>(priorities.size()) * norm - 0.5 * quad;
}

double log_prob(const Network& net, const MatrixXd& observations, const VectorXd& priorities,
                double sigma) {
  return gaussian_log_density(priorities, policy_means(net, observations), sigma);
}

VectorXd logpi_output_weights(const VectorXd& priorities, const VectorXd& means, double sigma) {
  // d log pi / d o_m = (1/sigma^2) sum_j r_j mu_j (delta_jm - mu_m)
  //                  = (mu_m / sigma^2) (r_m - sum_j r_j mu_j),  r = a - mu
  const VectorXd r = priorities - means;
  const double mixed = r.dot(means);
  return means.cwiseProduct((r.array() - mixed).matrix()) / (sigma * sigma);
}

Gradient policy_gradient_logpi(const Network& net, const MatrixXd& observations,
                               const VectorXd& priorities, double sigma) {
  if (priorities.size() != observations.cols()) throw std::invalid_argument("action length mismatch");
  const VectorXd mu = policy_means(net, observations);
  const VectorXd w = logpi_output_weights(priorities, mu, sigma);
  Gradient g = backward_weighted(net, observations, w);
  if (!g.all_finite()) throw std::domain_error("non-finite policy gradient");
  return g;
}

}  // namespace sdnrd
