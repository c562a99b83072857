#include "sdnrd/experiment.hpp"
#include "sdnrd/validation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace sdnrd;

struct Overrides {
  std::vector<std::uint64_t> seeds;
  std::string out;
  Index iterations = -1;
  std::string trace;
};

void apply(ExperimentSpec& spec, const Overrides& o) {
  if (!o.seeds.empty()) spec.seeds = o.seeds;
  if (!o.out.empty()) spec.output_dir = o.out;
  if (o.iterations >= 0) spec.trainer.iterations = o.iterations;
  if (!o.trace.empty()) spec.trace_dir = o.trace;
  spec.validate();
}

void print_summary(const ExperimentResult& result) {
  for (const auto& sr : result.seeds) {
    for (const auto& r : sr.evaluations) {
      const EvaluationSummary s = summarize(r.episodes);
      std::printf("seed %llu %-8s iter %-4lld load %.2f  mean %.6f s  p95 %.6f s  throughput %.1f/s\n",
                  static_cast<unsigned long long>(r.seed), r.topology.c_str(),
                  static_cast<long long>(r.iteration), r.load_fraction, s.mean_response_time,
                  s.p95_response_time, s.throughput);
    }
  }
  std::printf("results written to %s\n", result.spec.output_dir.string().c_str());
}

int run_validate_sim(Index completions, std::uint64_t seed) {
  bool ok = true;
  for (double rho : {0.3, 0.5, 0.8}) {
    const Mm1Check c = check_mm1(rho, completions, seed);
    std::printf("%s M/M/1 rho=%.1f expected %.6f s simulated %.6f s rel.err %.4f (%lld completions)\n",
                c.passed ? "PASS" : "FAIL", rho, c.expected, c.simulated, c.relative_error,
                static_cast<long long>(c.completions));
    ok = ok && c.passed;
  }
  return ok ? 0 : 1;
}

int run_grad_check(Index instances, std::uint64_t seed) {
  GradCheckOptions options;
  options.instances = instances;
  const GradCheckReport r = check_policy_gradients(options, seed);
  std::printf("%s grad log pi: max rel.err %.3g (tol %.0e)\n",
              r.max_logpi_error < options.logpi_tolerance ? "PASS" : "FAIL", r.max_logpi_error,
              options.logpi_tolerance);
  std::printf("%s grad mu: max rel.err %.3g (tol %.0e)\n",
              r.max_mean_error < options.logpi_tolerance ? "PASS" : "FAIL", r.max_mean_error,
              options.logpi_tolerance);
  std::printf("%s clipped surrogate: max rel.err %.3g (tol %.0e), %lld clipped samples\n",
              r.max_surrogate_error < options.surrogate_tolerance ? "PASS" : "FAIL",
              r.max_surrogate_error, options.surrogate_tolerance,
              static_cast<long long>(r.clipped_samples));
  std::printf("%lld instances, %lld redrawn near a kink\n", static_cast<long long>(r.instances),
              static_cast<long long>(r.redraws));
  return r.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Request dispatching in a multi-controller SDN control plane"};
  app.require_subcommand(1);

  Overrides overrides;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--seed", overrides.seeds, "Seed(s), replacing the spec's list");
    cmd->add_option("--out", overrides.out, "Output directory");
  };

  std::string spec_path;
  auto* train = app.add_subcommand("train", "Train a learned mode and evaluate its checkpoints");
  train->add_option("--spec", spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--iterations", overrides.iterations, "Training iterations");
  add_overrides(train);

  std::string checkpoint, topology;
  std::vector<double> loads;
  Index episodes = -1;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a baseline or a checkpoint");
  auto* eval_spec = evaluate->add_option("--spec", spec_path, "Experiment spec (JSON)")
                        ->check(CLI::ExistingFile);
  auto* eval_ckpt = evaluate->add_option("--checkpoint", checkpoint, "Agent checkpoint directory")
                        ->check(CLI::ExistingDirectory);
  eval_spec->excludes(eval_ckpt);
  evaluate->add_option("--topology", topology, "Topology for --checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--load", loads, "Load fraction(s)");
  evaluate->add_option("--episodes", episodes, "Episodes per load");
  evaluate->add_option("--trace", overrides.trace, "Write per-episode event traces here");
  add_overrides(evaluate);

  auto* sweep = app.add_subcommand("sweep", "Run a spec once per value of one parameter");
  sweep->add_option("--spec", spec_path, "Sweep spec (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", overrides.out, "Output directory");

  Index completions = 1000000;
  std::uint64_t check_seed = 1;
  auto* validate = app.add_subcommand("validate-sim", "M/M/1 check of the simulator");
  validate->add_option("--completions", completions, "Completions per utilization");
  validate->add_option("--seed", check_seed, "Seed");

  Index instances = 100;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the policy gradients");
  grad->add_option("--instances", instances, "Random instances");
  grad->add_option("--seed", check_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentSpec spec = load_experiment_spec(spec_path);
      if (!is_learned(spec.mode)) throw ConfigError("train needs MAPPO, SA_PPO_MA or CENTRAL");
      if (spec.checkpoint) throw ConfigError("train does not take a checkpoint; use evaluate");
      apply(spec, overrides);
      print_summary(run_experiment(spec));
    } else if (*evaluate) {
      ExperimentSpec spec;
      if (!spec_path.empty()) {
        spec = load_experiment_spec(spec_path);
        if (is_learned(spec.mode) && !spec.checkpoint) {
          throw ConfigError("spec has a learned mode but no checkpoint; use train");
        }
      } else if (!checkpoint.empty()) {
        if (topology.empty()) throw ConfigError("--checkpoint needs --topology");
        const AgentCheckpoint cp = load_agents(checkpoint);
        spec.mode = parse_experiment_mode(to_string(cp.agents.mode));
        spec.checkpoint = checkpoint;
        spec.topology = topology;
        spec.trainer = cp.config;
        spec.seeds = {1};
      } else {
        throw ConfigError("evaluate needs --spec or --checkpoint");
      }
      if (!loads.empty()) spec.eval_loads = loads;
      if (episodes > 0) spec.eval_episodes = episodes;
      apply(spec, overrides);
      print_summary(run_experiment(spec));
    } else if (*sweep) {
      run_sweep(spec_path, overrides.out.empty() ? std::nullopt
                                                 : std::optional<std::filesystem::path>(overrides.out));
    } else if (*validate) {
      return run_validate_sim(completions, check_seed);
    } else if (*grad) {
      return run_grad_check(instances, check_seed);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
