#pragma once

// Implementation of the command-line subcommands, callable in-process.
// Every command writes a manifest.json into its output directory whose
// "config" object can be passed back through --config to repeat the run.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "breedrl/baselines.hpp"
#include "breedrl/data_io.hpp"
#include "breedrl/envs.hpp"
#include "breedrl/nnpolicy.hpp"
#include "breedrl/trainer.hpp"

namespace breedrl {

inline constexpr const char* kVersionTag = "breedrl 0.1.0";
inline constexpr const char* kDataDirVariable = "BREEDRL_DATA_DIR";

// Invalid command-line input: unknown names, out-of-range values, missing files.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EnvKind { kBreedingGym, kSimplified, kSelectionScores, kPairScore };

EnvKind parse_env_kind(const std::string& name);
std::string env_kind_name(EnvKind kind);

struct DatasetSource {
  std::filesystem::path genotypes;
  std::filesystem::path markers;
  std::optional<std::size_t> subset_markers;  // random marker subset size
  std::uint64_t subset_seed = 0;
};

// Fills unset paths from $BREEDRL_DATA_DIR (genotypes.txt, markers.csv).
DatasetSource resolve_dataset_source(DatasetSource source);
std::shared_ptr<const FounderDataset> load_source(const DatasetSource& source);

// standard-gs | ohv | random | learned:<checkpoint>
std::unique_ptr<ScorePolicy> make_policy(const std::string& spec, const FounderDataset& dataset);

// Episode e of a run seeded with `master_seed`.
std::uint64_t simulation_seed(std::uint64_t master_seed, std::size_t episode);

// Generation-0 record followed by one record per step.
std::vector<GenerationRecord> run_episode(EnvKind kind, std::shared_ptr<const FounderDataset> data,
                                          const EnvConfig& env, const ScorePolicy& policy,
                                          std::uint64_t seed);

struct SimulationRun {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<GenerationRecord>> episodes;

  [[nodiscard]] std::vector<double> final_best_traits() const;
  [[nodiscard]] std::vector<double> best_traits_at(std::size_t generation) const;
};

SimulationRun run_simulation(EnvKind kind, std::shared_ptr<const FounderDataset> data,
                             const EnvConfig& env, const ScorePolicy& policy,
                             std::uint64_t master_seed, std::size_t episodes, unsigned workers);

struct GenDataOptions {
  SyntheticSpec spec;
  std::filesystem::path out_dir;
};

struct SimulateOptions {
  DatasetSource data;
  EnvKind env = EnvKind::kSelectionScores;
  EnvConfig env_config;
  std::string policy = "standard-gs";
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::filesystem::path out_dir;
};

struct TrainOptions {
  DatasetSource data;
  TrainConfig config;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::optional<std::size_t> stop_after_updates;
};

struct CompareOptions {
  DatasetSource data;
  EnvKind env = EnvKind::kSelectionScores;
  EnvConfig env_config;
  std::vector<std::string> policies;
  std::size_t episodes = 100;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::filesystem::path out_dir;
};

struct GradcheckOptions {
  std::size_t loci = 120;
  std::size_t plants = 3;
  double eps = 1e-5;
  std::uint64_t seed = 0;
};

struct SimulationSummary {
  std::vector<double> final_best_traits;
  double mean = 0.0;
  double standard_error = 0.0;
};

struct CompareReport {
  std::vector<std::string> policies;
  // [policy][generation]
  std::vector<std::vector<double>> mean_best;
  std::vector<std::vector<double>> se_best;
  // Final-generation difference relative to the first policy, in percent.
  std::vector<double> final_percent_difference;
  // One-sided paired p-value of policy p over the first policy (1.0 for p = 0).
  std::vector<double> p_value_vs_first;
};

void cmd_gen_data(const GenDataOptions& options);
SimulationSummary cmd_simulate(const SimulateOptions& options);
void cmd_train(const TrainOptions& options);
CompareReport cmd_compare(const CompareOptions& options);
GradCheckResult cmd_gradcheck(const GradcheckOptions& options);

// JSON views of the option structs; from_json overrides only present keys.
nlohmann::json to_json(const EnvConfig& c);
void apply_json(const nlohmann::json& j, EnvConfig& c);
nlohmann::json to_json(const TrainConfig& c);
void apply_json(const nlohmann::json& j, TrainConfig& c);
nlohmann::json to_json(const DatasetSource& s);
void apply_json(const nlohmann::json& j, DatasetSource& s);

// Reads a config file; a manifest's "config" object is accepted as well.
nlohmann::json read_config_file(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const nlohmann::json& config, std::uint64_t master_seed,
                    const std::vector<std::filesystem::path>& artifacts,
                    const std::string& started_at);
std::string utc_timestamp();

}  // namespace breedrl
