#include "sdnrd/baselines.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace sdnrd;

namespace {

// Brute force over p on a 0.01 grid for one switch and two controllers.
double grid_minimum(const Topology& t, const VectorXd& rates) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 100; ++k) {
    const double p = k / 100.0;
    MatrixXd probs(2, 1);
    probs << p, 1.0 - p;
    best = std::min(best, gd_model_cost(t, rates, probs));
  }
  return best;
}

}  // namespace

TEST_CASE("CWRR weights by capacity") {
  const Topology t = test::make_topology((VectorXd(2) << 6000, 9000).finished(),
                                         MatrixXd::Constant(2, 3, 0.01));
  const VectorXd p = cwrr_probabilities(t);
  CHECK(p[0] == doctest::Approx(0.4));
  CHECK(p[1] == doctest::Approx(0.6));
  const StaticDispatchPolicy pol = cwrr_policy(t, true);
  CHECK(pol.probabilities.cols() == 3);
  CHECK(pol.plan().rotate);

  const Topology sym = test::make_topology(VectorXd::Constant(4, 500.0), MatrixXd::Zero(4, 2));
  CHECK((cwrr_probabilities(sym).array() - 0.25).abs().maxCoeff() < 1e-15);
  const Topology one = test::make_topology(VectorXd::Constant(1, 500.0), MatrixXd::Zero(1, 2));
  CHECK(cwrr_probabilities(one) == VectorXd::Ones(1));

  CHECK((random_policy(t).probabilities.array() == 0.5).all());
}

TEST_CASE("simplex projection") {
  CHECK(project_to_simplex((VectorXd(3) << 0.2, 0.3, 0.5).finished()).isApprox(
      (VectorXd(3) << 0.2, 0.3, 0.5).finished()));
  CHECK(project_to_simplex((VectorXd(2) << 2.0, 0.0).finished()) ==
        (VectorXd(2) << 1.0, 0.0).finished());
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int k = 0; k < 500; ++k) {
    const VectorXd v = VectorXd::NullaryExpr(1 + k % 6, [&] { return normal(rng); });
    const VectorXd p = project_to_simplex(v);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((p.array() >= 0.0).all());
  }
}

TEST_CASE("GD on symmetric and asymmetric instances") {
  const Topology sym = test::make_topology(VectorXd::Constant(2, 1000.0),
                                           MatrixXd::Constant(2, 1, 0.01));
  const GdResult even = gd_dispatch(sym, VectorXd::Constant(1, 800.0));
  CHECK(even.probabilities(0, 0) == doctest::Approx(0.5).epsilon(1e-6));

  MatrixXd lat(2, 1);
  lat << 0.001, 0.05;
  const Topology near = test::make_topology(VectorXd::Constant(2, 1000.0), lat);
  const GdResult light = gd_dispatch(near, VectorXd::Constant(1, 100.0));
  CHECK(light.probabilities(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("GD matches a grid search on one-switch instances") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> cap(200.0, 2000.0), lat(0.0, 0.03), load(0.1, 0.9);
  for (int k = 0; k < 50; ++k) {
    MatrixXd d(2, 1);
    d << lat(rng), lat(rng);
    const Topology t = test::make_topology((VectorXd(2) << cap(rng), cap(rng)).finished(), d);
    const VectorXd rates = VectorXd::Constant(1, load(rng) * t.total_capacity());
    const GdResult r = gd_dispatch(t, rates);
    CHECK(r.converged);
    CHECK(r.cost <= grid_minimum(t, rates) + 1e-4);
  }
}

TEST_CASE("GD iterates stay feasible and never get worse") {
  const Topology t = load_topology(test::fixture("south_america_3ctl.json"));
  for (double rho : {0.3, 0.8, 0.95}) {
    const VectorXd rates = make_workload(t, rho).arrival_rates;
    const GdResult r = gd_dispatch(t, rates);
    for (Index n = 0; n < t.num_switches; ++n) {
      CHECK(std::abs(r.probabilities.col(n).sum() - 1.0) < 1e-9);
      CHECK((r.probabilities.col(n).array() >= 0.0).all());
    }
    const VectorXd lambda_m = r.probabilities * rates;
    CHECK((lambda_m.array() < t.capacities.array()).all());
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i) {
      CHECK(r.cost_trace[i] <= r.cost_trace[i - 1] + 1e-12);
    }
    CHECK(r.cost <= gd_model_cost(t, rates, cwrr_policy(t).probabilities));
  }
}

TEST_CASE("model gradient matches finite differences") {
  const Topology t = load_topology(test::fixture("south_america_3ctl.json"));
  const VectorXd rates = make_workload(t, 0.6).arrival_rates;
  const MatrixXd p = cwrr_policy(t).probabilities;
  const MatrixXd g = gd_model_gradient(t, rates, p);
  const double h = 1e-7;
  for (Index m = 0; m < 3; ++m) {
    for (Index n = 0; n < 8; n += 3) {
      MatrixXd up = p, down = p;
      up(m, n) += h;
      down(m, n) -= h;
      const double fd = (gd_model_cost(t, rates, up) - gd_model_cost(t, rates, down)) / (2 * h);
      CHECK(g(m, n) == doctest::Approx(fd).epsilon(1e-5));
    }
  }
  MatrixXd saturated = MatrixXd::Zero(3, 8);
  saturated.row(0).setOnes();
  CHECK(std::isinf(gd_model_cost(t, make_workload(t, 0.9).arrival_rates, saturated)));
}
