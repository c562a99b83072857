#include "sdnrd/validation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace sdnrd {

Mm1Check check_mm1(double utilization, Index min_completions, std::uint64_t seed,
                   double service_rate, double tolerance) {
  if (!(utilization > 0.0 && utilization < 1.0)) throw ConfigError("utilization must lie in (0, 1)");
  Topology topo;
  topo.num_switches = 1;
  topo.num_controllers = 1;
  topo.capacities = VectorXd::Constant(1, service_rate);
  topo.latency = MatrixXd::Zero(1, 1);
  topo.arrival_weights = VectorXd::Ones(1);
  topo.switch_ids = {"s0"};
  topo.controller_ids = {"c0"};

  SimConfig cfg;
  cfg.step_duration = 10.0;
  cfg.record_response_times = false;
  Simulator sim(topo, cfg);
  const WorkloadSpec workload = make_workload(topo, utilization);
  sim.reset_episode(workload, seed);
  const DispatchPlan plan{MatrixXd::Ones(1, 1)};
  sim.warm_up(plan, 100.0 / (service_rate * (1.0 - utilization)) + 10.0);

  double sum = 0.0;
  Index count = 0;
  while (count < min_completions) {
    const StepOutcome out = sim.run_step(plan);
    sum += out.response_time_sums.sum();
    count += out.responses.sum();
  }

  Mm1Check r;
  r.utilization = utilization;
  r.service_rate = service_rate;
  r.expected = 1.0 / (service_rate - workload.total_rate());
  r.simulated = sum / static_cast<double>(count);
  r.completions = count;
  r.relative_error = std::abs(r.simulated - r.expected) / r.expected;
  r.passed = r.relative_error < tolerance;
  return r;
}

namespace {

// Smallest |pre-activation| of any hidden unit over the input columns.
double kink_distance(const Network& net, const MatrixXd& inputs) {
  double closest = std::numeric_limits<double>::infinity();
  MatrixXd act = inputs;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    const MatrixXd pre = (net.layer(l).weight * act).colwise() + net.layer(l).bias;
    closest = std::min(closest, pre.cwiseAbs().minCoeff());
    act = pre.cwiseMax(0.0);
  }
  return closest;
}

double relative_error(const VectorXd& analytic, const VectorXd& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale < 1e-9) return 0.0;
  return (analytic - numeric).norm() / scale;
}

template <typename F>
VectorXd central_difference(Network net, F&& objective, double h) {
  VectorXd theta = net.params().flatten();
  VectorXd grad(theta.size());
  Gradient shaped = net.params();
  for (Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    shaped.unflatten(theta);
    net.params() = shaped;
    const double up = objective(net);
    theta[i] = keep - h;
    shaped.unflatten(theta);
    net.params() = shaped;
    const double down = objective(net);
    theta[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

constexpr std::array<Index, 4> kOptionCounts{1, 2, 3, 5};
constexpr std::array<double, 3> kSigmas{0.01, 0.05, 0.2};

}  // namespace

GradCheckReport check_policy_gradients(const GradCheckOptions& options, std::uint64_t seed) {
  GradCheckReport report;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<Index> history(1, 4);
  const double h = options.step;

  while (report.instances < options.instances) {
    const Index m = kOptionCounts[static_cast<std::size_t>(report.instances) % kOptionCounts.size()];
    const double sigma = kSigmas[static_cast<std::size_t>(report.instances / 4) % kSigmas.size()];
    const Index inputs = observation_size(history(rng));
    Network net = Network::orthogonal({inputs, 8, 8, 1}, std::sqrt(2.0), 1.0, rng);
    for (auto& layer : net.params().layers) {
      for (Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * normal(rng);
    }
    const MatrixXd z = MatrixXd::NullaryExpr(inputs, m, [&] { return unit(rng); });
    if (kink_distance(net, z) < 1e-3) {
      ++report.redraws;
      continue;
    }
    const VectorXd mu = policy_means(net, z);
    VectorXd a = mu;
    for (Index k = 0; k < m; ++k) a[k] += sigma * normal(rng);

    const VectorXd logpi_fd =
        central_difference(net, [&](const Network& n) { return log_prob(n, z, a, sigma); }, h);
    const VectorXd logpi = policy_gradient_logpi(net, z, a, sigma).flatten();
    report.max_logpi_error = std::max(report.max_logpi_error, relative_error(logpi, logpi_fd));

    const auto mean_grads = softmax_mean_gradient(net, z);
    for (Index k = 0; k < m; ++k) {
      const VectorXd fd =
          central_difference(net, [&](const Network& n) { return policy_means(n, z)[k]; }, h);
      report.max_mean_error =
          std::max(report.max_mean_error, relative_error(mean_grads[k].flatten(), fd));
    }

    // Clipped surrogate: behaviour samples from the current parameters,
    // evaluated at a perturbed copy so that some ratios leave the clip band.
    std::vector<PolicySample> batch;
    Network current = net;
    VectorXd theta = net.params().flatten();
    for (Index i = 0; i < theta.size(); ++i) theta[i] += 0.02 * normal(rng);
    Gradient shaped = net.params();
    shaped.unflatten(theta);
    current.params() = shaped;
    const double surrogate_sigma = std::max(sigma, 0.05);
    bool near_kink = false;
    for (Index b = 0; b < options.surrogate_batch; ++b) {
      PolicySample s;
      s.observations = MatrixXd::NullaryExpr(inputs, m, [&] { return unit(rng); });
      const VectorXd old_mu = policy_means(net, s.observations);
      s.priorities = old_mu;
      for (Index k = 0; k < m; ++k) s.priorities[k] += surrogate_sigma * normal(rng);
      s.old_log_prob = gaussian_log_density(s.priorities, old_mu, surrogate_sigma);
      s.advantage = normal(rng);
      const double ratio =
          std::exp(log_prob(current, s.observations, s.priorities, surrogate_sigma) - s.old_log_prob);
      const double clip = 0.2;
      if (std::abs(ratio - (1.0 + clip)) < 1e-3 || std::abs(ratio - (1.0 - clip)) < 1e-3 ||
          kink_distance(current, s.observations) < 1e-3) {
        near_kink = true;
      }
      batch.push_back(std::move(s));
    }
    if (near_kink) {
      ++report.redraws;
      continue;
    }
    SurrogateStats stats;
    const VectorXd surrogate =
        surrogate_gradient(current, batch, 0.2, surrogate_sigma, &stats).flatten();
    const VectorXd surrogate_fd = central_difference(
        current, [&](const Network& n) { return clipped_surrogate(n, batch, 0.2, surrogate_sigma); }, h);
    report.max_surrogate_error =
        std::max(report.max_surrogate_error, relative_error(surrogate, surrogate_fd));
    report.clipped_samples += stats.clipped;
    ++report.instances;
  }
  report.passed = report.max_logpi_error < options.logpi_tolerance &&
                  report.max_mean_error < options.logpi_tolerance &&
                  report.max_surrogate_error < options.surrogate_tolerance;
  return report;
}

}  // namespace sdnrd
