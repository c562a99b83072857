// Experiment runner: JSON experiment specs, agent checkpoints, noise-free
// evaluation and the CSV result files.
//
// Files written to the output directory:
//   config.json       resolved spec, including the calibrated weight factor
//   results.csv       seed,topology,iteration,load,episodes,mean_response_time,
//                     median_response_time,p95_response_time,throughput
//   episodes.csv      one row per evaluation episode
//   utilization.csv   per-controller busy fraction of every evaluation episode
//   summary.csv       mean and sample std over seeds of the final results
//   training.csv      per-iteration training metrics (learned modes)
//   training_utilization.csv  per-controller busy fraction of training episodes
//   checkpoints/seed_<s>/iter_<k>/   agent checkpoints (learned modes)

#ifndef SDNRD_EXPERIMENT_HPP_
#define SDNRD_EXPERIMENT_HPP_

#include "sdnrd/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sdnrd {

enum class ExperimentMode { Mappo, SaPpoMa, Central, Cwrr, Gd, Random };

const char* to_string(ExperimentMode mode);
ExperimentMode parse_experiment_mode(const std::string& name);
bool is_learned(ExperimentMode mode);
TrainMode train_mode(ExperimentMode mode);

// Where the GD baseline takes its arrival rates from.
enum class GdRates { Measured, Exact };

struct ExperimentSpec {
  std::filesystem::path topology;
  ExperimentMode mode = ExperimentMode::Mappo;
  TrainerConfig trainer;
  std::vector<double> eval_loads{0.5, 0.8};
  Index eval_episodes = 2;
  Index eval_every = 0;  // also evaluate every k iterations; 0 = first and last only
  std::optional<std::filesystem::path> transfer_topology;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path output_dir = "results";
  GdRates gd_rates = GdRates::Measured;
  bool cwrr_rotation = false;
  // Evaluate this checkpoint instead of training (learned modes).
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> trace_dir;

  void validate() const;
};

// Relative paths inside the JSON are resolved against `base_dir`.
ExperimentSpec parse_experiment_spec(const std::string& json_text,
                                     const std::filesystem::path& base_dir = {});
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);
std::string experiment_spec_to_json(const ExperimentSpec& spec);

// Applies the keys of a JSON object onto `config`; unknown keys throw.
void apply_trainer_overrides(TrainerConfig& config, const std::string& json_object);

struct AgentCheckpoint {
  AgentSet agents;
  TrainerConfig config;  // only the fields needed to run the policies
  double weight_factor = 0.0;
  Index iteration = 0;
};

void save_agents(const std::filesystem::path& dir, const AgentCheckpoint& checkpoint);
AgentCheckpoint load_agents(const std::filesystem::path& dir);

// Averages over evaluation episodes.
struct EvaluationSummary {
  double load_fraction = 0.0;
  Index episodes = 0;
  double mean_response_time = 0.0;
  double median_response_time = 0.0;
  double p95_response_time = 0.0;
  double throughput = 0.0;
  VectorXd utilization;
};

EvaluationSummary summarize(const std::vector<EpisodeStats>& episodes);

// Episode seeds depend only on (seed, load, episode), so every policy is
// evaluated on the same arrival streams.
std::uint64_t evaluation_seed(std::uint64_t seed, double load_fraction, Index episode);

struct EvaluationOptions {
  Index episodes = 2;
  std::uint64_t seed = 1;
  GdRates gd_rates = GdRates::Measured;
  bool cwrr_rotation = false;
  std::optional<std::filesystem::path> trace_dir;
  std::string trace_label = "eval";
};

// Noise-free episodes of learned agents; the topology may have a different
// controller count than the one trained on.
std::vector<EpisodeStats> evaluate_agents(const AgentSet& agents, const Topology& topology,
                                          const TrainerConfig& config, double load_fraction,
                                          const EvaluationOptions& options);

std::vector<EpisodeStats> evaluate_baseline(ExperimentMode mode, const Topology& topology,
                                            const TrainerConfig& config, double load_fraction,
                                            const EvaluationOptions& options);

EvaluationSummary evaluate_policy(const std::filesystem::path& checkpoint,
                                  const Topology& topology, double load_fraction,
                                  Index episodes, std::uint64_t seed);

// Evaluation results of one (seed, topology, iteration, load) cell.
struct EvaluationRecord {
  std::uint64_t seed = 0;
  std::string topology;  // "train" or "transfer"
  Index iteration = 0;
  double load_fraction = 0.0;
  std::vector<EpisodeStats> episodes;
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EvaluationRecord> evaluations;
  std::vector<IterationMetrics> training;
};

struct ExperimentResult {
  ExperimentSpec spec;  // resolved
  std::vector<SeedResult> seeds;
};

// Seeds run on SDNRD_WORKERS threads; output does not depend on the count.
ExperimentResult run_experiment(const ExperimentSpec& spec, bool write_files = true);

// Number of worker threads from SDNRD_WORKERS (default 1).
unsigned worker_count();

void write_experiment_files(const ExperimentResult& result);

// Runs the spec once per value of sweep.parameter (a trainer key, or
// "eval_loads" / "topology" / "transfer_topology"), each into its own
// subdirectory, and writes sweep.csv with the combined summaries.
void run_sweep(const std::filesystem::path& spec_path,
               const std::optional<std::filesystem::path>& output_override = {});

// Formats a double for CSV output with a fixed, locale-independent format.
std::string csv_number(double value);

}  // namespace sdnrd

#endif  // SDNRD_EXPERIMENT_HPP_
