#include "breedrl/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "breedrl/errors.hpp"
#include "breedrl/parallel.hpp"
#include "breedrl/stats.hpp"

namespace breedrl {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSimulationSeedStream = 0x7369'6D75'6C61'7401ULL;
constexpr std::uint64_t kPolicyStream = 0x706F'6C69'6379'0002ULL;

template <typename T>
void maybe(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

std::string reward_mode_name(RewardMode m) {
  return m == RewardMode::kTerminal ? "terminal" : "per_step";
}

RewardMode parse_reward_mode(const std::string& s) {
  if (s == "terminal") return RewardMode::kTerminal;
  if (s == "per_step" || s == "per-step") return RewardMode::kPerStep;
  throw UsageError("unknown reward mode '" + s + "' (expected terminal or per_step)");
}

std::string aggregation_name(Aggregation a) { return a == Aggregation::kMax ? "max" : "mean"; }

Aggregation parse_aggregation(const std::string& s) {
  if (s == "max") return Aggregation::kMax;
  if (s == "mean") return Aggregation::kMean;
  throw UsageError("unknown aggregation '" + s + "' (expected max or mean)");
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string episode_file_name(std::size_t e) {
  std::ostringstream name;
  name << "episode_" << std::setw(4) << std::setfill('0') << e << ".csv";
  return name.str();
}

double safe_standard_error(std::span<const double> values) {
  return values.size() >= 2 ? standard_error(values) : 0.0;
}

}  // namespace

EnvKind parse_env_kind(const std::string& name) {
  if (name == "breeding-gym") return EnvKind::kBreedingGym;
  if (name == "simplified") return EnvKind::kSimplified;
  if (name == "selection-scores") return EnvKind::kSelectionScores;
  if (name == "pair-score") return EnvKind::kPairScore;
  throw UsageError("unknown environment '" + name +
                   "' (expected breeding-gym, simplified, selection-scores or pair-score)");
}

std::string env_kind_name(EnvKind kind) {
  switch (kind) {
    case EnvKind::kBreedingGym: return "breeding-gym";
    case EnvKind::kSimplified: return "simplified";
    case EnvKind::kSelectionScores: return "selection-scores";
    case EnvKind::kPairScore: return "pair-score";
  }
  return "unknown";
}

DatasetSource resolve_dataset_source(DatasetSource source) {
  if (source.genotypes.empty() || source.markers.empty()) {
    const char* dir = std::getenv(kDataDirVariable);
    if (dir != nullptr && *dir != '\0') {
      if (source.genotypes.empty()) source.genotypes = std::filesystem::path(dir) / "genotypes.txt";
      if (source.markers.empty()) source.markers = std::filesystem::path(dir) / "markers.csv";
    }
  }
  if (source.genotypes.empty() || source.markers.empty()) {
    throw UsageError(std::string("dataset paths missing: pass --genotypes and --markers or set ") +
                     kDataDirVariable);
  }
  for (const auto& p : {source.genotypes, source.markers}) {
    if (!std::filesystem::exists(p)) throw UsageError("dataset file not found: " + p.string());
  }
  return source;
}

std::shared_ptr<const FounderDataset> load_source(const DatasetSource& source) {
  auto ds = load_dataset(source.genotypes, source.markers);
  if (source.subset_markers && *source.subset_markers != ds.num_loci()) {
    ds = subset_markers(ds, *source.subset_markers, RngStream(source.subset_seed, 0x5B5E7));
  }
  return std::make_shared<const FounderDataset>(std::move(ds));
}

std::unique_ptr<ScorePolicy> make_policy(const std::string& spec, const FounderDataset& dataset) {
  if (spec == "standard-gs") return std::make_unique<StandardGsPolicy>();
  if (spec == "ohv") return std::make_unique<OhvPolicy>(dataset.model);
  if (spec == "random") return std::make_unique<RandomPolicy>();
  if (spec.starts_with("learned:")) {
    const std::filesystem::path ckpt = spec.substr(8);
    if (!std::filesystem::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt.string());
    return std::make_unique<LearnedPolicy>(load_checkpoint(ckpt, dataset.num_loci()));
  }
  throw UsageError("unknown policy '" + spec +
                   "' (expected standard-gs, ohv, random or learned:<checkpoint>)");
}

std::uint64_t simulation_seed(std::uint64_t master_seed, std::size_t episode) {
  return RngStream(master_seed, kSimulationSeedStream).fork(episode).next_u64();
}

std::vector<GenerationRecord> run_episode(EnvKind kind, std::shared_ptr<const FounderDataset> data,
                                          const EnvConfig& env, const ScorePolicy& policy,
                                          std::uint64_t seed) {
  std::vector<GenerationRecord> records;
  const RngStream policy_root(seed, kPolicyStream);
  const TraitModel& model = data->model;

  switch (kind) {
    case EnvKind::kSelectionScores: {
      SelectionScoresEnv e(data, env);
      auto obs = e.reset(seed);
      records.push_back(make_generation_record(seed, e.population(), model));
      while (!e.done()) {
        RngStream rng = policy_root.fork(e.generation());
        auto result = e.step(policy.act(obs, rng));
        obs = std::move(result.observation);
        records.push_back(make_generation_record(seed, e.population(), model));
      }
      break;
    }
    case EnvKind::kPairScore: {
      // Per-plant scores s become cross scores s_i + s_j.
      PairScoreEnv e(data, env);
      auto obs = e.reset(seed);
      records.push_back(make_generation_record(seed, e.population(), model));
      while (!e.done()) {
        RngStream rng = policy_root.fork(e.generation());
        const auto s = policy.act(obs, rng);
        PairScores matrix{s.size(), s.size(), std::vector<double>(s.size() * s.size())};
        for (std::size_t i = 0; i < s.size(); ++i) {
          for (std::size_t j = 0; j < s.size(); ++j) matrix.values[i * s.size() + j] = s[i] + s[j];
        }
        auto result = e.step(matrix);
        obs = std::move(result.observation);
        records.push_back(make_generation_record(seed, e.population(), model));
      }
      break;
    }
    case EnvKind::kSimplified: {
      // The environment selects by trait itself; the configured (k, l) is the fixed action.
      SimplifiedBreedingGym e(data, env);
      e.reset(seed);
      records.push_back(make_generation_record(seed, e.population(), model));
      while (!e.done()) {
        e.step({env.num_selected, env.num_crosses});
        records.push_back(make_generation_record(seed, e.population(), model));
      }
      break;
    }
    case EnvKind::kBreedingGym: {
      // Top-k by policy score, then l random crosses refilling n offspring.
      BreedingGym e(data, env);
      e.reset(seed);
      records.push_back(make_generation_record(seed, e.population(), model));
      while (!e.done()) {
        const WeightedObservation obs{
            weighted_observation(e.population(), model),
            static_cast<double>(e.generation()) / static_cast<double>(env.horizon)};
        RngStream rng = policy_root.fork(e.generation());
        const auto scores = policy.act(obs, rng);
        const auto selected = select_top_k(scores, env.num_selected);
        const auto counts = offspring_counts(env.population_size, env.num_crosses);
        e.step(random_cross_plan(selected, counts, rng.fork(1)));
        records.push_back(make_generation_record(seed, e.population(), model));
      }
      break;
    }
  }
  return records;
}

std::vector<double> SimulationRun::final_best_traits() const {
  std::vector<double> out;
  for (const auto& ep : episodes) out.push_back(ep.back().best_trait);
  return out;
}

std::vector<double> SimulationRun::best_traits_at(std::size_t generation) const {
  std::vector<double> out;
  for (const auto& ep : episodes) out.push_back(ep.at(generation).best_trait);
  return out;
}

SimulationRun run_simulation(EnvKind kind, std::shared_ptr<const FounderDataset> data,
                             const EnvConfig& env, const ScorePolicy& policy,
                             std::uint64_t master_seed, std::size_t episodes, unsigned workers) {
  SimulationRun run;
  run.seeds.resize(episodes);
  run.episodes.resize(episodes);
  for (std::size_t e = 0; e < episodes; ++e) run.seeds[e] = simulation_seed(master_seed, e);
  EnvConfig single = env;
  single.workers = 1;
  parallel_for(episodes, workers, [&](std::size_t e) {
    run.episodes[e] = run_episode(kind, data, single, policy, run.seeds[e]);
  });
  return run;
}

// ---------------------------------------------------------------------------

json to_json(const EnvConfig& c) {
  return json{{"n", c.population_size},
              {"k", c.num_selected},
              {"l", c.num_crosses},
              {"T", c.horizon},
              {"reward_mode", reward_mode_name(c.reward_mode)},
              {"aggregation", aggregation_name(c.aggregation)},
              {"gamma", c.gamma}};
}

void apply_json(const json& j, EnvConfig& c) {
  maybe(j, "n", c.population_size);
  maybe(j, "k", c.num_selected);
  maybe(j, "l", c.num_crosses);
  maybe(j, "T", c.horizon);
  maybe(j, "gamma", c.gamma);
  if (j.contains("reward_mode")) c.reward_mode = parse_reward_mode(j.at("reward_mode"));
  if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation"));
}

json to_json(const TrainConfig& c) {
  json curriculum = json::array();
  for (const auto& s : c.curriculum) curriculum.push_back({s.progress, s.horizon});
  return json{{"total_steps", c.total_steps},
              {"num_envs", c.num_envs},
              {"rollout_length", c.rollout_length},
              {"minibatch_size", c.minibatch_size},
              {"epochs_per_update", c.epochs_per_update},
              {"clip_ratio", c.clip_ratio},
              {"gamma", c.gamma},
              {"gae_lambda", c.gae_lambda},
              {"learning_rate", c.learning_rate},
              {"value_coef", c.value_coef},
              {"entropy_coef", c.entropy_coef},
              {"max_grad_norm", c.max_grad_norm},
              {"adam_eps", c.adam_eps},
              {"curriculum", curriculum},
              {"master_seed", c.master_seed},
              {"eval_episodes", c.eval_episodes},
              {"eval_every_updates", c.eval_every_updates},
              {"checkpoint_every_updates", c.checkpoint_every_updates},
              {"env", to_json(c.env)}};
}

void apply_json(const json& j, TrainConfig& c) {
  maybe(j, "total_steps", c.total_steps);
  maybe(j, "num_envs", c.num_envs);
  maybe(j, "rollout_length", c.rollout_length);
  maybe(j, "minibatch_size", c.minibatch_size);
  maybe(j, "epochs_per_update", c.epochs_per_update);
  maybe(j, "clip_ratio", c.clip_ratio);
  maybe(j, "gamma", c.gamma);
  maybe(j, "gae_lambda", c.gae_lambda);
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "value_coef", c.value_coef);
  maybe(j, "entropy_coef", c.entropy_coef);
  maybe(j, "max_grad_norm", c.max_grad_norm);
  maybe(j, "adam_eps", c.adam_eps);
  maybe(j, "master_seed", c.master_seed);
  maybe(j, "eval_episodes", c.eval_episodes);
  maybe(j, "eval_every_updates", c.eval_every_updates);
  maybe(j, "checkpoint_every_updates", c.checkpoint_every_updates);
  if (j.contains("curriculum")) {
    c.curriculum.clear();
    for (const auto& stage : j.at("curriculum")) {
      c.curriculum.push_back({stage.at(0).get<double>(), stage.at(1).get<std::size_t>()});
    }
  }
  if (j.contains("env")) apply_json(j.at("env"), c.env);
}

json to_json(const DatasetSource& s) {
  json j{{"genotypes", s.genotypes.string()},
         {"markers", s.markers.string()},
         {"subset_seed", s.subset_seed}};
  j["subset_markers"] = s.subset_markers ? json(*s.subset_markers) : json(nullptr);
  return j;
}

void apply_json(const json& j, DatasetSource& s) {
  if (j.contains("genotypes")) s.genotypes = j.at("genotypes").get<std::string>();
  if (j.contains("markers")) s.markers = j.at("markers").get<std::string>();
  maybe(j, "subset_seed", s.subset_seed);
  if (j.contains("subset_markers")) {
    if (j.at("subset_markers").is_null()) {
      s.subset_markers.reset();
    } else {
      s.subset_markers = j.at("subset_markers").get<std::size_t>();
    }
  }
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  if (j.contains("config") && j.contains("version")) return j.at("config");
  return j;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const json& config, std::uint64_t master_seed,
                    const std::vector<std::filesystem::path>& artifacts,
                    const std::string& started_at) {
  json paths = json::array();
  for (const auto& a : artifacts) paths.push_back(a.string());
  const json manifest{{"command", command},
                      {"version", kVersionTag},
                      {"master_seed", master_seed},
                      {"config", config},
                      {"artifacts", paths},
                      {"started_at", started_at},
                      {"finished_at", utc_timestamp()}};
  write_json(out_dir / "manifest.json", manifest);
}

// ---------------------------------------------------------------------------

void cmd_gen_data(const GenDataOptions& options) {
  const auto started = utc_timestamp();
  const auto& s = options.spec;
  if (s.num_founders == 0) throw UsageError("--founders must be positive");
  if (s.num_loci == 0) throw UsageError("--markers must be positive");
  if (s.num_chromosomes == 0 || s.num_chromosomes > s.num_loci) {
    throw UsageError("--chromosomes must lie in [1, markers]");
  }
  const auto dataset = synthesize_founders(s);
  std::filesystem::create_directories(options.out_dir);
  const auto genotypes = options.out_dir / "genotypes.txt";
  const auto markers = options.out_dir / "markers.csv";
  save_dataset(dataset, genotypes, markers);
  const json config{{"founders", s.num_founders},
                    {"markers", s.num_loci},
                    {"chromosomes", s.num_chromosomes},
                    {"seed", s.seed},
                    {"allele_freq_spread", s.allele_freq_spread},
                    {"effect_scale", s.effect_scale},
                    {"out", options.out_dir.string()}};
  write_manifest(options.out_dir, "gen-data", config, s.seed, {genotypes, markers}, started);
}

SimulationSummary cmd_simulate(const SimulateOptions& options) {
  const auto started = utc_timestamp();
  const auto source = resolve_dataset_source(options.data);
  const auto data = load_source(source);
  const auto policy = make_policy(options.policy, *data);
  if (options.episodes == 0) throw UsageError("--episodes must be positive");

  const auto run = run_simulation(options.env, data, options.env_config, *policy, options.seed,
                                  options.episodes, options.workers);
  std::filesystem::create_directories(options.out_dir / "episodes");
  std::vector<std::filesystem::path> artifacts;
  for (std::size_t e = 0; e < run.episodes.size(); ++e) {
    const auto path = options.out_dir / "episodes" / episode_file_name(e);
    log_episode(path, run.episodes[e]);
    artifacts.push_back(path);
  }

  SimulationSummary summary;
  summary.final_best_traits = run.final_best_traits();
  summary.mean = mean(summary.final_best_traits);
  summary.standard_error = safe_standard_error(summary.final_best_traits);
  const json summary_json{{"env", env_kind_name(options.env)},
                          {"policy", options.policy},
                          {"episodes", options.episodes},
                          {"seeds", run.seeds},
                          {"final_best_traits", summary.final_best_traits},
                          {"mean_final_best_trait", summary.mean},
                          {"standard_error", summary.standard_error}};
  write_json(options.out_dir / "summary.json", summary_json);
  artifacts.push_back(options.out_dir / "summary.json");

  json config{{"command", "simulate"},
              {"data", to_json(source)},
              {"env_name", env_kind_name(options.env)},
              {"env", to_json(options.env_config)},
              {"policy", options.policy},
              {"episodes", options.episodes},
              {"seed", options.seed},
              {"workers", options.workers}};
  write_manifest(options.out_dir, "simulate", config, options.seed, artifacts, started);
  return summary;
}

void cmd_train(const TrainOptions& options) {
  const auto started = utc_timestamp();
  const auto source = resolve_dataset_source(options.data);
  const auto data = load_source(source);
  Trainer trainer(data, options.config);
  if (options.resume) {
    if (!std::filesystem::exists(*options.resume / "trainer_state.bin")) {
      throw UsageError("no trainer state in " + options.resume->string());
    }
    trainer.load_state(*options.resume);
    if (std::filesystem::exists(*options.resume / "metrics.csv") &&
        std::filesystem::absolute(*options.resume) != std::filesystem::absolute(options.out_dir)) {
      std::filesystem::create_directories(options.out_dir);
      std::filesystem::copy_file(*options.resume / "metrics.csv", options.out_dir / "metrics.csv",
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }
  trainer.train(options.out_dir, options.stop_after_updates);
  json config{{"command", "train"},
              {"data", to_json(source)},
              {"train", to_json(options.config)},
              {"workers", options.config.workers}};
  write_manifest(options.out_dir, "train", config, options.config.master_seed,
                 {options.out_dir / "policy.ckpt", options.out_dir / "trainer_state.bin",
                  options.out_dir / "metrics.csv"},
                 started);
}

CompareReport cmd_compare(const CompareOptions& options) {
  const auto started = utc_timestamp();
  if (options.policies.size() < 2) throw UsageError("compare needs at least two --policy values");
  if (options.episodes == 0) throw UsageError("--episodes must be positive");
  const auto source = resolve_dataset_source(options.data);
  const auto data = load_source(source);

  CompareReport report;
  report.policies = options.policies;
  std::vector<SimulationRun> runs;
  for (const auto& spec : options.policies) {
    const auto policy = make_policy(spec, *data);
    runs.push_back(run_simulation(options.env, data, options.env_config, *policy, options.seed,
                                  options.episodes, options.workers));
  }
  const std::size_t generations = runs.front().episodes.front().size();
  for (const auto& run : runs) {
    std::vector<double> means, ses;
    for (std::size_t g = 0; g < generations; ++g) {
      const auto best = run.best_traits_at(g);
      means.push_back(mean(best));
      ses.push_back(safe_standard_error(best));
    }
    report.mean_best.push_back(std::move(means));
    report.se_best.push_back(std::move(ses));
  }
  const auto reference_final = runs.front().final_best_traits();
  const double reference = report.mean_best.front().back();
  for (std::size_t p = 0; p < runs.size(); ++p) {
    const double value = report.mean_best[p].back();
    report.final_percent_difference.push_back(100.0 * (value - reference) / std::abs(reference));
    if (p == 0 || options.episodes < 2) {
      report.p_value_vs_first.push_back(1.0);
    } else {
      report.p_value_vs_first.push_back(
          paired_t_test(runs[p].final_best_traits(), reference_final).p_value);
    }
  }

  std::filesystem::create_directories(options.out_dir);
  {
    std::ofstream out(options.out_dir / "report.csv", std::ios::trunc);
    out << "generation";
    for (const auto& p : report.policies) out << ',' << p << "_mean," << p << "_se";
    out << '\n';
    for (std::size_t g = 0; g < generations; ++g) {
      out << g;
      for (std::size_t p = 0; p < runs.size(); ++p) {
        out << ',' << format_double(report.mean_best[p][g]) << ','
            << format_double(report.se_best[p][g]);
      }
      out << '\n';
    }
    if (!out) throw std::runtime_error("failed writing report.csv");
  }
  json summary = json::array();
  for (std::size_t p = 0; p < runs.size(); ++p) {
    summary.push_back({{"policy", report.policies[p]},
                       {"final_mean_best_trait", report.mean_best[p].back()},
                       {"final_standard_error", report.se_best[p].back()},
                       {"percent_difference_vs_first", report.final_percent_difference[p]},
                       {"paired_p_value_vs_first", report.p_value_vs_first[p]}});
  }
  write_json(options.out_dir / "summary.json", summary);

  json config{{"command", "compare"},
              {"data", to_json(source)},
              {"env_name", env_kind_name(options.env)},
              {"env", to_json(options.env_config)},
              {"policies", options.policies},
              {"episodes", options.episodes},
              {"seed", options.seed},
              {"workers", options.workers}};
  write_manifest(options.out_dir, "compare", config, options.seed,
                 {options.out_dir / "report.csv", options.out_dir / "summary.json"}, started);
  return report;
}

GradCheckResult cmd_gradcheck(const GradcheckOptions& options) {
  NetConfig config;
  config.input_length = options.loci;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  RngStream rng(options.seed, 0x67726164);
  const auto params = init_params(config, rng.fork(0));
  PlantTensor obs(options.plants, options.loci);
  RngStream data_rng = rng.fork(1);
  for (double& x : obs.data()) x = data_rng.normal();
  return gradient_check(params, obs, 0.3, options.eps, rng.fork(2));
}

}  // namespace breedrl
