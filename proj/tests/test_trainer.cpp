#include "sdnrd/trainer.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace sdnrd;

namespace {

TrainerConfig small_config() {
  TrainerConfig c;
  c.steps_per_episode = 60;
  c.warmup_duration = 2.0;
  c.hidden = {8, 8};
  c.epochs = 2;
  c.weight_factor = 0.04;
  return c;
}

Topology fixture3() { return load_topology(test::fixture("south_america_3ctl.json")); }

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("rollout collection") {
  const Topology t = fixture3();
  const TrainerConfig cfg = small_config();
  Rng init(1);
  const AgentSet agents = make_agents(t, cfg, TrainMode::Mappo, init);
  CHECK(agents.policies.size() == 8);
  CHECK(agents.critics.size() == 1);

  Simulator sim = make_simulator(t, cfg, TrainMode::Mappo);
  Rng rng(2);
  std::vector<EpisodeStats> stats;
  const RolloutBuffer buf = collect_rollout(sim, agents, cfg, 0, 3, rng, &stats);
  REQUIRE(buf.samples.size() == 120);
  CHECK(buf.episode_starts == std::vector<Index>{0, 60});
  CHECK(stats.size() == 2);
  CHECK(buf.samples[59].episode_end);
  CHECK(buf.samples[119].episode_end);
  CHECK_FALSE(buf.samples[60].episode_end);
  CHECK(buf.samples[0].load_fraction == 0.5);
  CHECK(buf.samples[60].load_fraction == 0.8);
  CHECK(buf.samples[0].state.size() == global_state_size(3, 8, 3));

  const double sigma = cfg.exploration_std;
  double worst = 0.0;
  for (const auto& s : buf.samples) {
    for (std::size_t n = 0; n < 8; ++n) {
      worst = std::max(worst, std::abs(s.behavior_log_prob[n] -
                                       log_prob(agents.policies[n], s.observations[n],
                                                s.priorities[n], sigma)));
    }
  }
  CHECK(worst < 1e-9);

  Simulator sim2 = make_simulator(t, cfg, TrainMode::Mappo);
  Rng rng2(2);
  const RolloutBuffer again = collect_rollout(sim2, agents, cfg, 0, 3, rng2);
  CHECK(again.samples.back().priorities[4] == buf.samples.back().priorities[4]);
  CHECK(again.samples.back().rewards == buf.samples.back().rewards);
}

TEST_CASE("generalized advantage estimation") {
  const std::vector<bool> ends{false, false, true};
  const VectorXd r = vec({1.0, 0.0, 1.0});
  const VectorXd v = vec({0.5, 0.5, 0.5});
  const VectorXd next = vec({0.5, 0.5, 0.0});

  const VectorXd td = compute_gae(r, v, next, ends, 0.9, 0.0);
  CHECK(td[0] == doctest::Approx(0.95));
  CHECK(td[1] == doctest::Approx(-0.05));
  CHECK(td[2] == doctest::Approx(0.5));

  const VectorXd a = compute_gae(r, v, next, ends, 0.9, 0.95);
  CHECK(a[2] == doctest::Approx(0.5));
  CHECK(a[1] == doctest::Approx(-0.05 + 0.855 * 0.5));
  CHECK(a[0] == doctest::Approx(0.95 + 0.855 * (-0.05 + 0.855 * 0.5)));

  const VectorXd single = compute_gae(vec({2.5}), vec({0.0}), vec({0.0}), {true}, 0.9, 0.95);
  CHECK(single[0] == 2.5);

  // The recursion does not cross an episode boundary.
  const VectorXd two = compute_gae(vec({1, 1}), vec({0, 0}), vec({0, 0}), {true, true}, 0.9, 0.95);
  CHECK(two[0] == 1.0);

  CHECK_THROWS_AS(compute_gae(r, v, next, {true}, 0.9, 0.95), std::invalid_argument);
}

TEST_CASE("critic fitting") {
  CHECK(bellman_residual(1.0, 0.3, 0.6, 0.9) == doctest::Approx(0.16));

  TrainerConfig cfg = small_config();
  Rng rng(4);
  Network zero({5, 8, 1});
  const MatrixXd x = MatrixXd::Random(5, 80);
  CHECK(update_value(zero, x, VectorXd::Zero(80), cfg, rng) == 0.0);

  Network critic = make_priority_network(0, rng, {16, 16});
  const VectorXd targets = (x.transpose() * vec({0.5, -1.0, 0.2, 0.0, 0.3})).array() + 0.4;
  cfg.learning_rate = 3e-3;
  cfg.epochs = 5;
  const double first = update_value(critic, x, targets, cfg, rng);
  double last = first;
  for (int k = 0; k < 20; ++k) last = update_value(critic, x, targets, cfg, rng);
  CHECK(last < 0.2 * first);
}

TEST_CASE("clipped surrogate gradient") {
  Rng rng(5);
  const Network net = make_priority_network(2, rng, {8, 8});
  const double sigma = 0.05;
  PolicySample s;
  s.observations = MatrixXd::Random(7, 3).cwiseAbs();
  s.priorities = policy_means(net, s.observations) + vec({0.02, -0.03, 0.01});
  const double lp = log_prob(net, s.observations, s.priorities, sigma);
  s.advantage = 2.0;

  SUBCASE("ratio above the band with positive advantage is clipped") {
    s.old_log_prob = lp - std::log(1.5);
    const std::array<PolicySample, 1> batch{s};
    SurrogateStats stats;
    CHECK(surrogate_gradient(net, batch, 0.2, sigma, &stats).squared_norm() == 0.0);
    CHECK(stats.clipped == 1);
    CHECK(clipped_surrogate(net, batch, 0.2, sigma) == doctest::Approx(1.2 * 2.0));
  }

  SUBCASE("unit ratio gives the advantage-weighted score") {
    s.old_log_prob = lp;
    const std::array<PolicySample, 2> batch{s, s};
    Gradient expected = policy_gradient_logpi(net, s.observations, s.priorities, sigma);
    expected *= 2.0;
    const Gradient g = surrogate_gradient(net, batch, 0.2, sigma);
    CHECK((g.flatten() - expected.flatten()).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("agrees with finite differences of the surrogate") {
    std::vector<PolicySample> batch;
    Rng r(6);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < 6; ++k) {
      PolicySample b;
      b.observations = MatrixXd::Random(7, 3).cwiseAbs();
      const VectorXd mu = policy_means(net, b.observations);
      b.priorities = mu + sigma * VectorXd::NullaryExpr(3, [&] { return normal(r); });
      b.old_log_prob = gaussian_log_density(b.priorities, mu, sigma) + 0.05 * normal(r);
      b.advantage = normal(r);
      batch.push_back(b);
    }
    const VectorXd an = surrogate_gradient(net, batch, 0.2, sigma).flatten();
    VectorXd theta = net.params().flatten();
    Network probe = net;
    Gradient shaped = net.params();
    VectorXd fd(theta.size());
    for (Index i = 0; i < theta.size(); ++i) {
      const double keep = theta[i];
      theta[i] = keep + 1e-6;
      shaped.unflatten(theta);
      probe.params() = shaped;
      const double up = clipped_surrogate(probe, batch, 0.2, sigma);
      theta[i] = keep - 1e-6;
      shaped.unflatten(theta);
      probe.params() = shaped;
      const double down = clipped_surrogate(probe, batch, 0.2, sigma);
      theta[i] = keep;
      fd[i] = (up - down) / 2e-6;
    }
    CHECK((an - fd).norm() / std::max(an.norm(), fd.norm()) < 1e-5);
  }

  SUBCASE("zero advantages leave the policy unchanged") {
    s.old_log_prob = lp;
    s.advantage = 0.0;
    std::vector<PolicySample> batch(40, s);
    Network copy = net;
    TrainerConfig cfg = small_config();
    Rng r(7);
    update_policy(copy, batch, cfg, r);
    CHECK(copy.params().flatten() == net.params().flatten());
  }
}

TEST_CASE("advantages for every critic") {
  const Topology t = fixture3();
  TrainerConfig cfg = small_config();
  cfg.steps_per_episode = 10;
  for (TrainMode mode : {TrainMode::Mappo, TrainMode::SaPpoMa, TrainMode::Central}) {
    Rng init(8);
    const AgentSet agents = make_agents(t, cfg, mode, init);
    Simulator sim = make_simulator(t, cfg, mode);
    Rng rng(9);
    RolloutBuffer buf = collect_rollout(sim, agents, cfg, 0, 1, rng);
    compute_advantages(buf, agents, cfg);
    CHECK(buf.advantages_ready);
    CHECK(buf.advantages.size() == agents.critics.size());
    for (const auto& adv : buf.advantages) {
      CHECK(adv.size() == 20);
      // Standardized within each episode.
      CHECK(std::abs(adv.head(10).mean()) < 1e-9);
      CHECK(std::abs(adv.tail(10).mean()) < 1e-9);
    }
    const Index agents_count = static_cast<Index>(agents.policies.size());
    CHECK(policy_samples(buf, mode, agents_count - 1).size() == 20);
  }
}

TEST_CASE("training loop") {
  const Topology t = fixture3();
  TrainerConfig cfg = small_config();
  cfg.steps_per_episode = 10;

  cfg.iterations = 0;
  const TrainResult none = train(cfg, t, TrainMode::Mappo, 1);
  CHECK(none.metrics.empty());
  CHECK(none.agents.policies[0].params().flatten() == none.initial.policies[0].params().flatten());

  cfg.iterations = 2;
  Index hook_calls = 0;
  const TrainResult a = train(cfg, t, TrainMode::Mappo, 1, [&](Index, const AgentSet&) { ++hook_calls; });
  const TrainResult b = train(cfg, t, TrainMode::Mappo, 1);
  CHECK(hook_calls == 3);
  REQUIRE(a.metrics.size() == 2);
  CHECK(a.metrics[1].value_loss == b.metrics[1].value_loss);
  CHECK(a.metrics[1].episodes[1].mean_response_time == b.metrics[1].episodes[1].mean_response_time);
  CHECK(a.agents.policies[3].params().flatten() == b.agents.policies[3].params().flatten());
  CHECK(a.agents.policies[3].params().flatten() != a.initial.policies[3].params().flatten());
}

TEST_CASE("config parsing and validation") {
  CHECK(parse_train_mode("MAPPO") == TrainMode::Mappo);
  CHECK(parse_train_mode("SA_PPO_MA") == TrainMode::SaPpoMa);
  CHECK(parse_train_mode("CENTRAL") == TrainMode::Central);
  CHECK_THROWS_AS(parse_train_mode("PPO"), ConfigError);
  CHECK(parse_advantage_normalization("iteration") == AdvantageNormalization::Iteration);
  TrainerConfig c;
  c.clip = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainerConfig{};
  c.training_loads = {1.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_NOTHROW(TrainerConfig{}.validate());
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}
