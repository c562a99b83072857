#include "sdnrd/neural.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace sdnrd;

namespace {

using Net = Mlp<double>;
using Grad = MlpGradient<double>;

template <typename F>
Vec<double> finite_difference(Net net, F&& f, double h = 1e-6) {
  Vec<double> theta = net.params().flatten();
  Vec<double> g(theta.size());
  Grad shaped = net.params();
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + h;
    shaped.unflatten(theta);
    net.params() = shaped;
    const double up = f(net);
    theta[i] = keep - h;
    shaped.unflatten(theta);
    net.params() = shaped;
    const double down = f(net);
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double min_preactivation(const Net& net, const Mat<double>& x) {
  double closest = 1e300;
  Mat<double> a = x;
  for (std::size_t l = 0; l + 1 < net.num_layers(); ++l) {
    const Mat<double> z = (net.layer(l).weight * a).colwise() + net.layer(l).bias;
    closest = std::min(closest, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return closest;
}

double rel_err(const Vec<double>& a, const Vec<double>& b) {
  const double s = std::max(a.norm(), b.norm());
  return s < 1e-12 ? 0.0 : (a - b).norm() / s;
}

}  // namespace

TEST_CASE("forward pass") {
  const Net zero({4, 3, 1});
  CHECK(forward_scalar(zero, Vec<double>::Ones(4)) == 0.0);

  Net lin({1, 1});
  lin.layer(0).weight(0, 0) = 2.0;
  lin.layer(0).bias[0] = 1.0;
  CHECK(forward_scalar(lin, Vec<double>::Constant(1, 3.0)) == 7.0);

  CHECK_THROWS_AS(forward(zero, Vec<double>::Ones(3)), std::invalid_argument);
  CHECK_THROWS_AS(Net({4}), std::invalid_argument);
  CHECK_THROWS_AS(Net({4, 0, 1}), std::invalid_argument);
}

TEST_CASE("float instantiation agrees with double") {
  std::mt19937_64 rng(1);
  const Net d = Net::orthogonal({3, 5, 1}, std::sqrt(2.0), 1.0, rng);
  Mlp<float> f({3, 5, 1});
  for (std::size_t l = 0; l < 2; ++l) {
    f.layer(l).weight = d.layer(l).weight.cast<float>();
    f.layer(l).bias = d.layer(l).bias.cast<float>();
  }
  const Vec<double> x = Vec<double>::LinSpaced(3, 0.1, 0.9);
  CHECK(forward_scalar(f, Vec<float>(x.cast<float>())) ==
        doctest::Approx(forward_scalar(d, x)).epsilon(1e-5));
}

TEST_CASE("orthogonal initialization") {
  std::mt19937_64 rng(2);
  const Net net = Net::orthogonal({6, 8, 8, 1}, std::sqrt(2.0), 0.01, rng);
  const Mat<double>& w0 = net.layer(0).weight;  // 8 x 6, orthonormal columns
  CHECK((w0.transpose() * w0 / 2.0 - Mat<double>::Identity(6, 6)).norm() < 1e-10);
  const Mat<double>& w1 = net.layer(1).weight;
  CHECK((w1 * w1.transpose() / 2.0 - Mat<double>::Identity(8, 8)).norm() < 1e-10);
  CHECK(net.layer(2).weight.norm() == doctest::Approx(0.01));
  CHECK(net.layer(1).bias.isZero());
}

TEST_CASE("parameter gradients") {
  Net lin({1, 1});
  lin.layer(0).weight(0, 0) = 5.0;
  const Grad g = backward_params(lin, Vec<double>::Constant(1, 2.0));
  CHECK(g.layers[0].weight(0, 0) == 2.0);
  CHECK(g.layers[0].bias[0] == 1.0);

  Net dead({1, 1, 1});
  dead.layer(0).weight(0, 0) = 1.0;
  dead.layer(0).bias[0] = -10.0;
  dead.layer(1).weight(0, 0) = 1.0;
  const Grad gd = backward_params(dead, Vec<double>::Constant(1, 2.0));
  CHECK(gd.layers[0].weight.isZero());
  CHECK(gd.layers[0].bias.isZero());
  CHECK(gd.layers[1].weight.isZero());
  CHECK(gd.layers[1].bias[0] == 1.0);
}

TEST_CASE("gradients agree with finite differences on random draws") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> width(1, 6);
  int checked = 0;
  double worst_f = 0.0, worst_mu = 0.0;
  while (checked < 100) {
    const Eigen::Index in = width(rng), hidden = width(rng), options = 1 + checked % 4;
    Net net = Net::orthogonal({in, hidden, hidden, 1}, std::sqrt(2.0), 1.0, rng);
    for (auto& layer : net.params().layers) {
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.1 * normal(rng);
    }
    const Mat<double> x = Mat<double>::NullaryExpr(in, options, [&] { return normal(rng); });
    if (min_preactivation(net, x) < 1e-3) continue;

    const Vec<double> fd =
        finite_difference(net, [&](const Net& n) { return forward_scalar(n, x.col(0)); });
    worst_f = std::max(worst_f, rel_err(backward_params(net, x.col(0)).flatten(), fd));

    const auto mu_grads = softmax_mean_gradient(net, x);
    for (Eigen::Index m = 0; m < options; ++m) {
      const Vec<double> fdm = finite_difference(net, [&](const Net& n) {
        return softmax(Vec<double>(forward_batch(n, x).row(0).transpose()))[m];
      });
      worst_mu = std::max(worst_mu, rel_err(mu_grads[m].flatten(), fdm));
    }
    ++checked;
  }
  CHECK(worst_f < 1e-6);
  CHECK(worst_mu < 1e-5);
}

TEST_CASE("softmax") {
  const Vec<double> flat = softmax(Vec<double>::Constant(3, 4.2));
  CHECK((flat.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  const Vec<double> two = softmax((Vec<double>(2) << 0.0, std::log(2.0)).finished());
  CHECK(two[0] == doctest::Approx(1.0 / 3.0));
  CHECK(two[1] == doctest::Approx(2.0 / 3.0));

  const Vec<double> big = softmax((Vec<double>(2) << 1000.0, 0.0).finished());
  CHECK(big.allFinite());
  CHECK(big[0] == 1.0);
  CHECK(big[1] < 1e-300);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int k = 0; k < 200; ++k) {
    const Vec<double> x = Vec<double>::NullaryExpr(1 + k % 7, [&] { return normal(rng); });
    const Vec<double> p = softmax(x);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((p.array() >= 0.0).all());
    const Vec<double> shifted = softmax(Vec<double>(x.array() + normal(rng)));
    CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(softmax(Vec<double>()), std::invalid_argument);
}

TEST_CASE("softmax mean gradient properties") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Net net = Net::orthogonal({4, 6, 1}, std::sqrt(2.0), 1.0, rng);

  const auto single = softmax_mean_gradient(net, Mat<double>::Ones(4, 1));
  CHECK(single.size() == 1);
  CHECK(single[0].squared_norm() == 0.0);

  for (Eigen::Index options : {2, 3, 5}) {
    const Mat<double> z = Mat<double>::NullaryExpr(4, options, [&] { return normal(rng); });
    const auto grads = softmax_mean_gradient(net, z);
    Grad total = net.zero_gradient();
    for (const auto& g : grads) total += g;
    CHECK(total.flatten().cwiseAbs().maxCoeff() < 1e-10);

    if (options <= 3) {
      // Direct double sum of the softmax Jacobian.
      const Vec<double> mu = softmax(Vec<double>(forward_batch(net, z).row(0).transpose()));
      for (Eigen::Index m = 0; m < options; ++m) {
        Grad direct = net.zero_gradient();
        for (Eigen::Index i = 0; i < options; ++i) {
          const double jac = mu[m] * ((i == m ? 1.0 : 0.0) - mu[i]);
          direct.add_scaled(jac, backward_params(net, z.col(i)));
        }
        CHECK((direct.flatten() - grads[m].flatten()).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("flatten round-trip") {
  std::mt19937_64 rng(6);
  const Net net = Net::orthogonal({3, 4, 1}, 1.0, 1.0, rng);
  Grad copy = net.zero_gradient();
  copy.unflatten(net.params().flatten());
  CHECK(copy.flatten() == net.params().flatten());
  CHECK(net.num_parameters() == 3 * 4 + 4 + 4 + 1);
  CHECK_THROWS_AS(copy.unflatten(Vec<double>::Zero(3)), std::invalid_argument);
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("zero gradient leaves parameters unchanged") {
    Net net({1, 1});
    net.layer(0).weight(0, 0) = 0.5;
    adam_update(net, net.zero_gradient(), cfg);
    CHECK(net.layer(0).weight(0, 0) == 0.5);
    CHECK(net.adam_step() == 1);
  }

  SUBCASE("first step moves by the learning rate against the gradient sign") {
    Net net({1, 1});
    Grad g = net.zero_gradient();
    g.layers[0].weight(0, 0) = 4.0;
    g.layers[0].bias[0] = -0.5;
    adam_update(net, g, cfg);
    // mhat = g, vhat = g^2, step = lr * g / (|g| + eps)
    CHECK(net.layer(0).weight(0, 0) == doctest::Approx(-0.1 * 4.0 / (4.0 + 1e-8)));
    CHECK(net.layer(0).bias[0] == doctest::Approx(0.1 * 0.5 / (0.5 + 1e-8)));

    // Second step by hand.
    g.layers[0].weight(0, 0) = 1.0;
    const double m = 0.9 * 0.4 + 0.1 * 1.0, v = 0.999 * 0.016 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    const double before = net.layer(0).weight(0, 0);
    adam_update(net, g, cfg);
    CHECK(net.layer(0).weight(0, 0) ==
          doctest::Approx(before - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)));
  }

  SUBCASE("deterministic and rejects non-finite gradients") {
    std::mt19937_64 r1(9), r2(9);
    Net a = Net::orthogonal({3, 4, 1}, 1.0, 1.0, r1);
    Net b = Net::orthogonal({3, 4, 1}, 1.0, 1.0, r2);
    const Grad g = backward_params(a, Vec<double>::Ones(3));
    for (int k = 0; k < 5; ++k) {
      adam_update(a, g, cfg);
      adam_update(b, g, cfg);
    }
    CHECK(a.params().flatten() == b.params().flatten());

    Grad bad = g;
    bad.layers[0].weight(0, 0) = std::nan("");
    CHECK_THROWS_AS(adam_update(a, bad, cfg), std::domain_error);
  }
}
