#include "sdnrd/experiment.hpp"

#include "sdnrd/checkpoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

namespace sdnrd {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Mappo: return "MAPPO";
    case ExperimentMode::SaPpoMa: return "SA_PPO_MA";
    case ExperimentMode::Central: return "CENTRAL";
    case ExperimentMode::Cwrr: return "CWRR";
    case ExperimentMode::Gd: return "GD";
    case ExperimentMode::Random: return "RANDOM";
  }
  return "?";
}

ExperimentMode parse_experiment_mode(const std::string& name) {
  for (auto mode : {ExperimentMode::Mappo, ExperimentMode::SaPpoMa, ExperimentMode::Central,
                    ExperimentMode::Cwrr, ExperimentMode::Gd, ExperimentMode::Random}) {
    if (name == to_string(mode)) return mode;
  }
  throw ConfigError("unknown mode: " + name);
}

bool is_learned(ExperimentMode mode) {
  return mode == ExperimentMode::Mappo || mode == ExperimentMode::SaPpoMa ||
         mode == ExperimentMode::Central;
}

TrainMode train_mode(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::Mappo: return TrainMode::Mappo;
    case ExperimentMode::SaPpoMa: return TrainMode::SaPpoMa;
    case ExperimentMode::Central: return TrainMode::Central;
    default: throw ConfigError(std::string("mode is not learned: ") + to_string(mode));
  }
}

std::string csv_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

namespace {

const char* service_name(ServiceDistribution s) {
  return s == ServiceDistribution::Exponential ? "exponential" : "deterministic";
}

ServiceDistribution parse_service(const std::string& name) {
  if (name == "exponential") return ServiceDistribution::Exponential;
  if (name == "deterministic") return ServiceDistribution::Deterministic;
  throw ConfigError("unknown service distribution: " + name);
}

json trainer_to_json(const TrainerConfig& c) {
  return json{{"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"clip", c.clip},
              {"learning_rate", c.learning_rate},
              {"minibatch", c.minibatch},
              {"epochs", c.epochs},
              {"iterations", c.iterations},
              {"steps_per_episode", c.steps_per_episode},
              {"training_loads", c.training_loads},
              {"step_duration", c.step_duration},
              {"warmup_duration", c.warmup_duration},
              {"exploration_std", c.exploration_std},
              {"history_length", c.history_length},
              {"hidden", c.hidden},
              {"advantage_normalization", to_string(c.advantage_normalization)},
              {"weight_factor", c.weight_factor},
              {"max_candidates", c.max_candidates},
              {"queue_threshold", c.queue_threshold},
              {"reference_queue", c.reference_queue},
              {"beacon_interval", c.beacon_interval},
              {"service", service_name(c.service)}};
}

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + key + "'");
  }
}

void apply_trainer_json(TrainerConfig& c, const json& j) {
  if (!j.is_object()) throw ConfigError("trainer overrides must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "gamma") c.gamma = get_as<double>(v, key);
    else if (key == "gae_lambda") c.gae_lambda = get_as<double>(v, key);
    else if (key == "clip") c.clip = get_as<double>(v, key);
    else if (key == "learning_rate") c.learning_rate = get_as<double>(v, key);
    else if (key == "minibatch") c.minibatch = get_as<Index>(v, key);
    else if (key == "epochs") c.epochs = get_as<Index>(v, key);
    else if (key == "iterations") c.iterations = get_as<Index>(v, key);
    else if (key == "steps_per_episode") c.steps_per_episode = get_as<Index>(v, key);
    else if (key == "training_loads") c.training_loads = get_as<std::vector<double>>(v, key);
    else if (key == "step_duration") c.step_duration = get_as<double>(v, key);
    else if (key == "warmup_duration") c.warmup_duration = get_as<double>(v, key);
    else if (key == "exploration_std") c.exploration_std = get_as<double>(v, key);
    else if (key == "history_length") c.history_length = get_as<Index>(v, key);
    else if (key == "hidden") c.hidden = get_as<std::vector<Index>>(v, key);
    else if (key == "advantage_normalization")
      c.advantage_normalization = parse_advantage_normalization(get_as<std::string>(v, key));
    else if (key == "weight_factor") c.weight_factor = get_as<double>(v, key);
    else if (key == "max_candidates") c.max_candidates = get_as<Index>(v, key);
    else if (key == "queue_threshold") c.queue_threshold = get_as<double>(v, key);
    else if (key == "reference_queue") c.reference_queue = get_as<double>(v, key);
    else if (key == "beacon_interval") c.beacon_interval = get_as<Index>(v, key);
    else if (key == "service") c.service = parse_service(get_as<std::string>(v, key));
    else throw ConfigError("unknown trainer key: " + key);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec spec_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("experiment spec must be a JSON object");
  ExperimentSpec s;
  bool has_topology = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "topology") {
      s.topology = resolve(base_dir, get_as<std::string>(v, key));
      has_topology = true;
    } else if (key == "mode") {
      s.mode = parse_experiment_mode(get_as<std::string>(v, key));
    } else if (key == "trainer") {
      apply_trainer_json(s.trainer, v);
    } else if (key == "eval_loads") {
      s.eval_loads = get_as<std::vector<double>>(v, key);
    } else if (key == "eval_episodes") {
      s.eval_episodes = get_as<Index>(v, key);
    } else if (key == "eval_every") {
      s.eval_every = get_as<Index>(v, key);
    } else if (key == "transfer_topology") {
      if (!v.is_null()) s.transfer_topology = resolve(base_dir, get_as<std::string>(v, key));
    } else if (key == "seeds") {
      s.seeds = get_as<std::vector<std::uint64_t>>(v, key);
    } else if (key == "output_dir") {
      s.output_dir = get_as<std::string>(v, key);
    } else if (key == "gd_rates") {
      const auto name = get_as<std::string>(v, key);
      if (name == "measured") s.gd_rates = GdRates::Measured;
      else if (name == "exact") s.gd_rates = GdRates::Exact;
      else throw ConfigError("gd_rates must be 'measured' or 'exact'");
    } else if (key == "cwrr_rotation") {
      s.cwrr_rotation = get_as<bool>(v, key);
    } else if (key == "checkpoint") {
      if (!v.is_null()) s.checkpoint = resolve(base_dir, get_as<std::string>(v, key));
    } else if (key == "trace_dir") {
      if (!v.is_null()) s.trace_dir = get_as<std::string>(v, key);
    } else if (key != "sweep") {
      throw ConfigError("unknown experiment key: " + key);
    }
  }
  if (!has_topology) throw ConfigError("experiment spec needs a topology");
  s.validate();
  return s;
}

}  // namespace

void ExperimentSpec::validate() const {
  trainer.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (eval_loads.empty()) throw ConfigError("at least one evaluation load is required");
  for (double load : eval_loads) {
    if (!(load > 0.0 && load < 1.0)) throw ConfigError("evaluation loads must lie in (0, 1)");
  }
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
  if (checkpoint && !is_learned(mode)) throw ConfigError("checkpoints apply to learned modes only");
}

ExperimentSpec parse_experiment_spec(const std::string& json_text, const fs::path& base_dir) {
  return spec_from_json(parse_json(json_text, "experiment spec"), base_dir);
}

ExperimentSpec load_experiment_spec(const fs::path& path) {
  return parse_experiment_spec(read_file(path), path.parent_path());
}

std::string experiment_spec_to_json(const ExperimentSpec& s) {
  json j{{"topology", s.topology.string()},
         {"mode", to_string(s.mode)},
         {"trainer", trainer_to_json(s.trainer)},
         {"eval_loads", s.eval_loads},
         {"eval_episodes", s.eval_episodes},
         {"eval_every", s.eval_every},
         {"seeds", s.seeds},
         {"output_dir", s.output_dir.string()},
         {"gd_rates", s.gd_rates == GdRates::Exact ? "exact" : "measured"},
         {"cwrr_rotation", s.cwrr_rotation}};
  if (s.transfer_topology) j["transfer_topology"] = s.transfer_topology->string();
  if (s.checkpoint) j["checkpoint"] = s.checkpoint->string();
  if (s.trace_dir) j["trace_dir"] = s.trace_dir->string();
  return j.dump(2) + "\n";
}

void apply_trainer_overrides(TrainerConfig& config, const std::string& json_object) {
  apply_trainer_json(config, parse_json(json_object, "trainer overrides"));
}

void save_agents(const fs::path& dir, const AgentCheckpoint& cp) {
  fs::create_directories(dir);
  json manifest{{"format", "sdnrd-agents"},
                {"version", kCheckpointVersion},
                {"mode", to_string(cp.agents.mode)},
                {"iteration", cp.iteration},
                {"weight_factor", cp.weight_factor},
                {"trainer", trainer_to_json(cp.config)}};
  json policies = json::array(), critics = json::array();
  for (std::size_t i = 0; i < cp.agents.policies.size(); ++i) {
    const std::string name = "policy_" + std::to_string(i) + ".bin";
    save_policy_file(dir / name, PolicyCheckpoint{cp.agents.policy_config, cp.agents.policies[i]});
    policies.push_back(name);
  }
  for (std::size_t i = 0; i < cp.agents.critics.size(); ++i) {
    const std::string name = "critic_" + std::to_string(i) + ".bin";
    save_network_file(dir / name, cp.agents.critics[i]);
    critics.push_back(name);
  }
  manifest["policies"] = policies;
  manifest["critics"] = critics;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
}

AgentCheckpoint load_agents(const fs::path& dir) {
  const json m = parse_json(read_file(dir / "manifest.json"), "checkpoint manifest");
  if (m.value("format", "") != "sdnrd-agents") throw ConfigError("not an agent checkpoint: " + dir.string());
  if (m.at("version").get<std::uint32_t>() != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  AgentCheckpoint cp;
  cp.agents.mode = parse_train_mode(m.at("mode").get<std::string>());
  cp.iteration = m.at("iteration").get<Index>();
  cp.weight_factor = m.at("weight_factor").get<double>();
  apply_trainer_json(cp.config, m.at("trainer"));
  cp.config.weight_factor = cp.weight_factor;
  for (const auto& name : m.at("policies")) {
    PolicyCheckpoint p = load_policy_file(dir / name.get<std::string>());
    cp.agents.policy_config = p.config;
    cp.agents.policies.push_back(std::move(p.network));
  }
  for (const auto& name : m.at("critics")) {
    cp.agents.critics.push_back(load_network_file(dir / name.get<std::string>()));
  }
  if (cp.agents.policies.empty()) throw ConfigError("checkpoint holds no policies");
  if (cp.agents.policy_config.history_length != cp.config.history_length) {
    throw ConfigError("checkpoint history length disagrees with its manifest");
  }
  return cp;
}

EvaluationSummary summarize(const std::vector<EpisodeStats>& episodes) {
  EvaluationSummary s;
  s.episodes = static_cast<Index>(episodes.size());
  if (episodes.empty()) return s;
  s.load_fraction = episodes.front().load_fraction;
  s.utilization = VectorXd::Zero(episodes.front().utilization.size());
  for (const auto& e : episodes) {
    s.mean_response_time += e.mean_response_time;
    s.median_response_time += e.median_response_time;
    s.p95_response_time += e.p95_response_time;
    s.throughput += e.throughput;
    s.utilization += e.utilization;
  }
  const double n = static_cast<double>(episodes.size());
  s.mean_response_time /= n;
  s.median_response_time /= n;
  s.p95_response_time /= n;
  s.throughput /= n;
  s.utilization /= n;
  return s;
}

std::uint64_t evaluation_seed(std::uint64_t seed, double load_fraction, Index episode) {
  return derive_seed(derive_seed(seed, 0xE7A1u),
                     static_cast<std::uint64_t>(std::llround(load_fraction * 1e6)),
                     static_cast<std::uint64_t>(episode));
}

namespace {

template <typename Run>
std::vector<EpisodeStats> run_episodes(Simulator& sim, double load, const EvaluationOptions& options,
                                       Run&& run) {
  std::vector<EpisodeStats> out;
  for (Index e = 0; e < options.episodes; ++e) {
    const std::uint64_t seed = evaluation_seed(options.seed, load, e);
    std::ofstream trace;
    if (options.trace_dir) {
      fs::create_directories(*options.trace_dir);
      const fs::path file = *options.trace_dir / (options.trace_label + "_load" + csv_number(load) +
                                                  "_ep" + std::to_string(e) + ".csv");
      trace.open(file, std::ios::binary);
      if (!trace) throw std::runtime_error("cannot write " + file.string());
      sim.set_trace(&trace);
    }
    out.push_back(run(seed));
    sim.set_trace(nullptr);
  }
  return out;
}

DispatchPlan gd_plan_from_telemetry(const Simulator& sim) {
  const Topology& topo = sim.topology();
  const TelemetrySnapshot& tel = sim.telemetry();
  const Index rows = std::min(tel.recorded_steps, tel.history_length);
  VectorXd rates = rows > 0
                       ? VectorXd(tel.arrival_history.bottomRows(rows).colwise().mean().transpose())
                       : sim.workload().arrival_rates;
  const double cap = 0.999 * topo.total_capacity();
  if (rates.sum() >= cap) rates *= cap / rates.sum();
  return DispatchPlan{gd_dispatch(topo, rates).probabilities};
}

}  // namespace

std::vector<EpisodeStats> evaluate_agents(const AgentSet& agents, const Topology& topology,
                                          const TrainerConfig& config, double load_fraction,
                                          const EvaluationOptions& options) {
  Simulator sim = make_simulator(topology, config, agents.mode);
  return run_episodes(sim, load_fraction, options, [&](std::uint64_t seed) {
    Rng rng(seed);
    return run_episode(sim, agents, config, load_fraction, seed, false, rng, nullptr);
  });
}

std::vector<EpisodeStats> evaluate_baseline(ExperimentMode mode, const Topology& topology,
                                            const TrainerConfig& config, double load_fraction,
                                            const EvaluationOptions& options) {
  Simulator sim(topology, config.sim_config());
  switch (mode) {
    case ExperimentMode::Cwrr:
    case ExperimentMode::Random: {
      const DispatchPlan plan = mode == ExperimentMode::Cwrr
                                    ? cwrr_policy(topology, options.cwrr_rotation).plan()
                                    : random_policy(topology).plan();
      return run_episodes(sim, load_fraction, options, [&](std::uint64_t seed) {
        return run_static_episode(sim, plan, config, load_fraction, seed);
      });
    }
    case ExperimentMode::Gd: {
      if (options.gd_rates == GdRates::Exact) {
        const DispatchPlan plan{
            gd_dispatch(topology, make_workload(topology, load_fraction).arrival_rates).probabilities};
        return run_episodes(sim, load_fraction, options, [&](std::uint64_t seed) {
          return run_static_episode(sim, plan, config, load_fraction, seed);
        });
      }
      return run_episodes(sim, load_fraction, options, [&](std::uint64_t seed) {
        return run_static_episode(sim, PlanAfterWarmUp(gd_plan_from_telemetry), config,
                                  load_fraction, seed);
      });
    }
    default:
      throw ConfigError(std::string("not a baseline mode: ") + to_string(mode));
  }
}

EvaluationSummary evaluate_policy(const fs::path& checkpoint, const Topology& topology,
                                  double load_fraction, Index episodes, std::uint64_t seed) {
  const AgentCheckpoint cp = load_agents(checkpoint);
  EvaluationOptions options;
  options.episodes = episodes;
  options.seed = seed;
  return summarize(evaluate_agents(cp.agents, topology, cp.config, load_fraction, options));
}

unsigned worker_count() {
  const char* env = std::getenv("SDNRD_WORKERS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("SDNRD_WORKERS must be a positive integer");
  return static_cast<unsigned>(n);
}

namespace {

struct Topologies {
  Topology train;
  std::optional<Topology> transfer;
};

std::vector<EvaluationRecord> evaluate_all(const ExperimentSpec& spec, const Topologies& topos,
                                           std::uint64_t seed, Index iteration,
                                           const std::function<std::vector<EpisodeStats>(
                                               const Topology&, double, const EvaluationOptions&)>& eval) {
  std::vector<EvaluationRecord> records;
  EvaluationOptions options;
  options.episodes = spec.eval_episodes;
  options.seed = seed;
  options.gd_rates = spec.gd_rates;
  options.cwrr_rotation = spec.cwrr_rotation;
  options.trace_dir = spec.trace_dir;
  const std::vector<std::pair<std::string, const Topology*>> targets = [&] {
    std::vector<std::pair<std::string, const Topology*>> t{{"train", &topos.train}};
    if (topos.transfer) t.emplace_back("transfer", &*topos.transfer);
    return t;
  }();
  for (const auto& [label, topo] : targets) {
    for (double load : spec.eval_loads) {
      options.trace_label = "seed" + std::to_string(seed) + "_" + label + "_iter" + std::to_string(iteration);
      records.push_back({seed, label, iteration, load, eval(*topo, load, options)});
    }
  }
  return records;
}

SeedResult run_seed(const ExperimentSpec& spec, const Topologies& topos, std::uint64_t seed,
                    bool write_files) {
  SeedResult result;
  result.seed = seed;
  const TrainerConfig& cfg = spec.trainer;
  if (!is_learned(spec.mode)) {
    result.evaluations = evaluate_all(spec, topos, seed, 0, [&](const Topology& t, double load,
                                                                const EvaluationOptions& o) {
      return evaluate_baseline(spec.mode, t, cfg, load, o);
    });
    return result;
  }

  auto evaluate_set = [&](const AgentSet& agents, const TrainerConfig& c, Index iteration) {
    auto records = evaluate_all(spec, topos, seed, iteration, [&](const Topology& t, double load,
                                                                  const EvaluationOptions& o) {
      return evaluate_agents(agents, t, c, load, o);
    });
    result.evaluations.insert(result.evaluations.end(), records.begin(), records.end());
  };

  if (spec.checkpoint) {
    const AgentCheckpoint cp = load_agents(*spec.checkpoint);
    evaluate_set(cp.agents, cp.config, cp.iteration);
    return result;
  }

  const fs::path ckpt_root = spec.output_dir / "checkpoints" / ("seed_" + std::to_string(seed));
  TrainResult trained = train(cfg, topos.train, train_mode(spec.mode), seed,
                              [&](Index ti, const AgentSet& agents) {
                                const bool due = ti == 0 || ti == cfg.iterations ||
                                                 (spec.eval_every > 0 && ti % spec.eval_every == 0);
                                if (!due) return;
                                evaluate_set(agents, cfg, ti);
                                if (write_files) {
                                  char name[32];
                                  std::snprintf(name, sizeof name, "iter_%04lld",
                                                static_cast<long long>(ti));
                                  save_agents(ckpt_root / name, {agents, cfg, cfg.weight_factor, ti});
                                }
                              });
  result.training = std::move(trained.metrics);
  return result;
}

struct SummaryRow {
  std::string topology;
  double load = 0.0;
  Index seeds = 0;
  double mean = 0.0, mean_std = 0.0, throughput = 0.0, throughput_std = 0.0;
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

// Final-iteration results grouped by (topology, load) in first-seen order.
std::vector<SummaryRow> summary_rows(const ExperimentResult& result) {
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& sr : result.seeds) {
    Index last = 0;
    for (const auto& r : sr.evaluations) last = std::max(last, r.iteration);
    for (const auto& r : sr.evaluations) {
      if (r.iteration != last) continue;
      const auto key = std::make_pair(r.topology, r.load_fraction);
      if (!groups.count(key)) keys.push_back(key);
      const EvaluationSummary s = summarize(r.episodes);
      groups[key].first.push_back(s.mean_response_time);
      groups[key].second.push_back(s.throughput);
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& key : keys) {
    const auto& [means, throughputs] = groups[key];
    SummaryRow row;
    row.topology = key.first;
    row.load = key.second;
    row.seeds = static_cast<Index>(means.size());
    std::tie(row.mean, row.mean_std) = mean_std(means);
    std::tie(row.throughput, row.throughput_std) = mean_std(throughputs);
    rows.push_back(row);
  }
  return rows;
}

std::ofstream open_csv(const fs::path& path, const std::string& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << "\n";
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec_in, bool write_files) {
  spec_in.validate();
  ExperimentResult result;
  result.spec = spec_in;
  ExperimentSpec& spec = result.spec;
  Topologies topos;
  topos.train = load_topology(spec.topology);
  if (spec.transfer_topology) topos.transfer = load_topology(*spec.transfer_topology);

  if (!spec.checkpoint && spec.trainer.weight_factor <= 0.0) {
    spec.trainer.weight_factor = calibrate_weight_factor(topos.train, spec.trainer, 0);
  }
  if (write_files) {
    fs::create_directories(spec.output_dir);
    std::ofstream out(spec.output_dir / "config.json", std::ios::binary);
    out << experiment_spec_to_json(spec);
  }

  result.seeds.resize(spec.seeds.size());
  std::vector<std::exception_ptr> errors(spec.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < spec.seeds.size(); i = next++) {
      try {
        result.seeds[i] = run_seed(spec, topos, spec.seeds[i], write_files);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned workers =
      std::min<unsigned>(worker_count(), static_cast<unsigned>(spec.seeds.size()));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (write_files) write_experiment_files(result);
  return result;
}

void write_experiment_files(const ExperimentResult& result) {
  const ExperimentSpec& spec = result.spec;
  fs::create_directories(spec.output_dir);
  const std::string mode = to_string(spec.mode);

  auto results = open_csv(spec.output_dir / "results.csv",
                          "mode,seed,topology,iteration,load,episodes,mean_response_time,"
                          "median_response_time,p95_response_time,throughput");
  auto episodes = open_csv(spec.output_dir / "episodes.csv",
                           "mode,seed,topology,iteration,load,episode,responses,mean_response_time,"
                           "median_response_time,p95_response_time,throughput,reward_sum,unstable");
  auto util = open_csv(spec.output_dir / "utilization.csv",
                       "mode,seed,topology,iteration,load,episode,controller,utilization");
  for (const auto& sr : result.seeds) {
    for (const auto& r : sr.evaluations) {
      const std::string prefix = mode + "," + std::to_string(r.seed) + "," + r.topology + "," +
                                 std::to_string(r.iteration) + "," + csv_number(r.load_fraction) + ",";
      const EvaluationSummary s = summarize(r.episodes);
      results << prefix << s.episodes << "," << csv_number(s.mean_response_time) << ","
              << csv_number(s.median_response_time) << "," << csv_number(s.p95_response_time) << ","
              << csv_number(s.throughput) << "\n";
      for (std::size_t e = 0; e < r.episodes.size(); ++e) {
        const EpisodeStats& st = r.episodes[e];
        episodes << prefix << e << "," << st.responses << "," << csv_number(st.mean_response_time)
                 << "," << csv_number(st.median_response_time) << ","
                 << csv_number(st.p95_response_time) << "," << csv_number(st.throughput) << ","
                 << csv_number(st.reward_sum) << "," << (st.unstable ? 1 : 0) << "\n";
        for (Index m = 0; m < st.utilization.size(); ++m) {
          util << prefix << e << "," << m << "," << csv_number(st.utilization[m]) << "\n";
        }
      }
    }
  }

  auto summary = open_csv(spec.output_dir / "summary.csv",
                          "mode,topology,load,seeds,mean_response_time_mean,mean_response_time_std,"
                          "throughput_mean,throughput_std");
  for (const auto& row : summary_rows(result)) {
    summary << mode << "," << row.topology << "," << csv_number(row.load) << "," << row.seeds << ","
            << csv_number(row.mean) << "," << csv_number(row.mean_std) << ","
            << csv_number(row.throughput) << "," << csv_number(row.throughput_std) << "\n";
  }

  if (is_learned(spec.mode) && !spec.checkpoint) {
    auto training = open_csv(spec.output_dir / "training.csv",
                             "mode,seed,iteration,load,responses,mean_response_time,"
                             "median_response_time,p95_response_time,throughput,reward_sum,"
                             "unstable,value_loss,clip_fraction,skipped_samples");
    auto training_util = open_csv(spec.output_dir / "training_utilization.csv",
                                  "mode,seed,iteration,load,controller,utilization");
    for (const auto& sr : result.seeds) {
      for (const auto& m : sr.training) {
        for (const auto& ep : m.episodes) {
          const std::string prefix = mode + "," + std::to_string(sr.seed) + "," +
                                     std::to_string(m.iteration) + "," + csv_number(ep.load_fraction) + ",";
          training << prefix << ep.responses << "," << csv_number(ep.mean_response_time) << ","
                   << csv_number(ep.median_response_time) << "," << csv_number(ep.p95_response_time)
                   << "," << csv_number(ep.throughput) << "," << csv_number(ep.reward_sum) << ","
                   << (ep.unstable ? 1 : 0) << "," << csv_number(m.value_loss) << ","
                   << csv_number(m.clip_fraction) << "," << m.skipped_samples << "\n";
          for (Index c = 0; c < ep.utilization.size(); ++c) {
            training_util << prefix << c << "," << csv_number(ep.utilization[c]) << "\n";
          }
        }
      }
    }
  }
}

void run_sweep(const fs::path& spec_path, const std::optional<fs::path>& output_override) {
  const json base = parse_json(read_file(spec_path), "sweep spec");
  if (!base.contains("sweep")) throw ConfigError("sweep spec needs a 'sweep' object");
  const json& sweep = base.at("sweep");
  const auto parameter = get_as<std::string>(sweep.at("parameter"), "sweep.parameter");
  const json& values = sweep.at("values");
  if (!values.is_array() || values.empty()) throw ConfigError("sweep.values must be a non-empty array");

  const fs::path base_dir = spec_path.parent_path();
  ExperimentSpec probe = spec_from_json(base, base_dir);
  const fs::path root = output_override ? *output_override : probe.output_dir;
  fs::create_directories(root);
  auto out = open_csv(root / "sweep.csv",
                      "parameter,value,mode,topology,load,seeds,mean_response_time_mean,"
                      "mean_response_time_std,throughput_mean,throughput_std");

  const json trainer_keys = trainer_to_json(TrainerConfig{});
  for (const auto& value : values) {
    json variant = base;
    variant.erase("sweep");
    if (trainer_keys.contains(parameter)) {
      variant["trainer"][parameter] = value;
    } else if (parameter == "eval_loads" || parameter == "topology" ||
               parameter == "transfer_topology" || parameter == "mode" ||
               parameter == "gd_rates") {
      variant[parameter] = value;
    } else {
      throw ConfigError("cannot sweep over '" + parameter + "'");
    }
    std::string label = value.is_string() ? value.get<std::string>() : value.dump();
    for (char& c : label) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
    }
    ExperimentSpec spec = spec_from_json(variant, base_dir);
    spec.output_dir = root / (parameter + "_" + label);
    const ExperimentResult result = run_experiment(spec);
    for (const auto& row : summary_rows(result)) {
      out << parameter << "," << label << "," << to_string(spec.mode) << "," << row.topology << ","
          << csv_number(row.load) << "," << row.seeds << "," << csv_number(row.mean) << ","
          << csv_number(row.mean_std) << "," << csv_number(row.throughput) << ","
          << csv_number(row.throughput_std) << "\n";
    }
  }
}

}  // namespace sdnrd
