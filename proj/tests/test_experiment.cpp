#include "sdnrd/experiment.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace sdnrd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sdnrd_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

ExperimentSpec quick_spec(ExperimentMode mode, const fs::path& out) {
  ExperimentSpec s;
  s.topology = test::fixture("south_america_3ctl.json");
  s.mode = mode;
  s.trainer.steps_per_episode = 10;
  s.trainer.warmup_duration = 2.0;
  s.trainer.hidden = {8, 8};
  s.trainer.epochs = 1;
  s.trainer.iterations = 1;
  s.trainer.weight_factor = 0.04;
  s.seeds = {1, 2};
  s.eval_episodes = 2;
  s.output_dir = out;
  return s;
}

}  // namespace

TEST_CASE("experiment spec parsing") {
  const ExperimentSpec s = parse_experiment_spec(
      R"({"topology": "topo.json", "mode": "GD", "gd_rates": "exact", "seeds": [3],
          "trainer": {"iterations": 7, "service": "deterministic"}})",
      "/base");
  CHECK(s.topology == fs::path("/base/topo.json"));
  CHECK(s.mode == ExperimentMode::Gd);
  CHECK(s.gd_rates == GdRates::Exact);
  CHECK(s.seeds == std::vector<std::uint64_t>{3});
  CHECK(s.trainer.iterations == 7);
  CHECK(s.trainer.service == ServiceDistribution::Deterministic);

  const ExperimentSpec back = parse_experiment_spec(experiment_spec_to_json(s));
  CHECK(back.topology == s.topology);
  CHECK(back.trainer.iterations == 7);

  CHECK_THROWS_AS(parse_experiment_spec(R"({"mode": "GD"})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"topology": "t.json", "colour": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_spec(R"({"topology": "t.json", "mode": "FAST"})"), ConfigError);
  TrainerConfig c;
  CHECK_THROWS_AS(apply_trainer_overrides(c, R"({"gamma_typo": 0.5})"), ConfigError);
  apply_trainer_overrides(c, R"({"gamma": 0.5, "advantage_normalization": "none"})");
  CHECK(c.gamma == 0.5);
  CHECK(c.advantage_normalization == AdvantageNormalization::None);
}

TEST_CASE("baseline evaluation over several loads") {
  const fs::path out = scratch("cwrr_loads");
  ExperimentSpec s = quick_spec(ExperimentMode::Cwrr, out);
  s.eval_loads = {0.2, 0.5, 0.8};
  run_experiment(s);
  const auto rows = read_csv(out / "results.csv");
  REQUIRE(rows.size() == 1 + 2 * 3);
  std::map<std::string, int> per_seed;
  for (std::size_t i = 1; i < rows.size(); ++i) ++per_seed[rows[i][1]];
  CHECK(per_seed["1"] == 3);
  CHECK(per_seed["2"] == 3);
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "utilization.csv"));
}

TEST_CASE("summary agrees with the episode rows") {
  const fs::path out = scratch("summary");
  run_experiment(quick_spec(ExperimentMode::Random, out));
  const auto episodes = read_csv(out / "episodes.csv");
  const auto header = episodes[0];
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    REQUIRE(it != header.end());
    return static_cast<std::size_t>(it - header.begin());
  };
  // Per-seed means of the episode means, then the mean and sample std over seeds.
  std::map<std::string, std::map<std::string, std::vector<double>>> by_load;
  for (std::size_t i = 1; i < episodes.size(); ++i) {
    by_load[episodes[i][col("load")]][episodes[i][col("seed")]].push_back(
        std::stod(episodes[i][col("mean_response_time")]));
  }
  const auto summary = read_csv(out / "summary.csv");
  REQUIRE(summary.size() == 3);
  for (std::size_t i = 1; i < summary.size(); ++i) {
    std::vector<double> seed_means;
    for (const auto& [seed, values] : by_load[summary[i][2]]) {
      double sum = 0.0;
      for (double v : values) sum += v;
      seed_means.push_back(sum / static_cast<double>(values.size()));
    }
    REQUIRE(seed_means.size() == 2);
    const double mean = (seed_means[0] + seed_means[1]) / 2.0;
    const double sd = std::abs(seed_means[0] - seed_means[1]) / std::sqrt(2.0);
    CHECK(std::stod(summary[i][4]) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(std::stod(summary[i][5]) == doctest::Approx(sd).epsilon(1e-6));
  }
}

TEST_CASE("reruns write byte-identical files") {
  const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
  run_experiment(quick_spec(ExperimentMode::Mappo, a));
  run_experiment(quick_spec(ExperimentMode::Mappo, b));
  for (const char* f : {"results.csv", "episodes.csv", "training.csv", "utilization.csv"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  CHECK(slurp(a / "checkpoints/seed_1/iter_0001/policy_0.bin") ==
        slurp(b / "checkpoints/seed_1/iter_0001/policy_0.bin"));
}

TEST_CASE("checkpoints transfer to a topology with more controllers") {
  const fs::path out = scratch("transfer");
  ExperimentSpec s = quick_spec(ExperimentMode::Mappo, out);
  s.seeds = {1};
  s.transfer_topology = test::fixture("south_america_5ctl.json");
  const ExperimentResult r = run_experiment(s);
  const fs::path ckpt = out / "checkpoints/seed_1/iter_0001";
  const AgentCheckpoint cp = load_agents(ckpt);
  CHECK(cp.iteration == 1);
  CHECK(cp.agents.policies.size() == 8);

  const Topology t5 = load_topology(test::fixture("south_america_5ctl.json"));
  const EvaluationSummary again = evaluate_policy(ckpt, t5, 0.5, s.eval_episodes, 1);
  bool found = false;
  for (const auto& rec : r.seeds[0].evaluations) {
    if (rec.topology == "transfer" && rec.iteration == 1 && rec.load_fraction == 0.5) {
      CHECK(summarize(rec.episodes).mean_response_time == again.mean_response_time);
      CHECK(rec.episodes[0].utilization.size() == 5);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("light load response time is round trip plus service") {
  const Topology t = load_topology(test::fixture("south_america_3ctl.json"));
  TrainerConfig cfg;
  cfg.steps_per_episode = 60;
  cfg.warmup_duration = 2.0;
  EvaluationOptions opt;
  opt.episodes = 1;
  const auto eps = evaluate_baseline(ExperimentMode::Cwrr, t, cfg, 0.01, opt);
  const VectorXd p = cwrr_probabilities(t);
  double expected = 0.0;
  for (Index n = 0; n < t.num_switches; ++n) {
    for (Index m = 0; m < t.num_controllers; ++m) {
      expected += p[m] * (2.0 * t.latency(m, n) + 1.0 / t.capacities[m]);
    }
  }
  expected /= static_cast<double>(t.num_switches);
  CHECK(eps[0].mean_response_time == doctest::Approx(expected).epsilon(0.01));
}

TEST_CASE("evaluation seeds pair modes and loads") {
  CHECK(evaluation_seed(1, 0.5, 0) == evaluation_seed(1, 0.5, 0));
  CHECK(evaluation_seed(1, 0.5, 0) != evaluation_seed(1, 0.8, 0));
  CHECK(evaluation_seed(1, 0.5, 0) != evaluation_seed(1, 0.5, 1));
  CHECK(evaluation_seed(1, 0.5, 0) != evaluation_seed(2, 0.5, 0));
  CHECK(csv_number(0.1) == "0.1");
}
