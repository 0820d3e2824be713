#pragma once

// Episodic breeding environments sharing one reset/step contract.
//
//   BreedingGym            raw genomes in, arbitrary cross plans out
//   SimplifiedBreedingGym  fixed n; (trait, correlation) in, (n_select, n_crosses) out
//   SelectionScoresEnv     fixed n; weighted genomes in, per-plant scores out
//   PairScoreEnv           fixed n; weighted genomes in, n x n cross scores out
//
// Randomness: the initial population is drawn from RngStream(seed, reset
// stream); step t uses RngStream(seed, transition stream).fork(t), with
// fork(0) for random pairing and fork(1) for meiosis. Replaying a
// (seed, action sequence) therefore reproduces every observation bitwise.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "breedrl/data_io.hpp"
#include "breedrl/genome.hpp"
#include "breedrl/meiosis.hpp"
#include "breedrl/rng.hpp"

namespace breedrl {

enum class RewardMode { kTerminal, kPerStep };

struct EnvConfig {
  std::size_t population_size = 200;  // n
  std::size_t num_selected = 20;      // k
  std::size_t num_crosses = 10;       // l
  std::size_t horizon = 10;           // T
  RewardMode reward_mode = RewardMode::kTerminal;
  Aggregation aggregation = Aggregation::kMax;
  double gamma = 1.0;
  unsigned workers = 1;  // meiosis threads per step
};

struct StepInfo {
  std::vector<double> traits;
  double best_trait = 0.0;
  double mean_trait = 0.0;
};

template <typename Observation>
struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
  StepInfo info;
};

// Shape -1 marks a variable dimension.
struct SpaceSpec {
  std::string key;
  std::vector<std::int64_t> shape;
  std::string dtype;
  double low = 0.0;
  double high = 0.0;

  friend bool operator==(const SpaceSpec&, const SpaceSpec&) = default;
};

struct TraitCorrelationObservation {
  std::vector<double> traits;
  std::vector<double> correlation;

  friend bool operator==(const TraitCorrelationObservation&,
                         const TraitCorrelationObservation&) = default;
};

struct WeightedObservation {
  PlantTensor genomes;               // (n, m, 2), w-weighted alleles
  double generation_fraction = 0.0;  // t / T

  friend bool operator==(const WeightedObservation&, const WeightedObservation&) = default;
};

struct SimplifiedAction {
  std::size_t num_selected = 0;
  std::size_t num_crosses = 0;
};

// Row-major n x n cross scores.
struct PairScores {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

// Indices of the k highest scores, ties resolved toward the lower index,
// returned in ascending index order.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);

// Offspring per cross when `total` offspring are split over `crosses` crosses:
// the first total % crosses crosses get one extra.
std::vector<std::size_t> offspring_counts(std::size_t total, std::size_t crosses);

// `num_crosses` independent uniform pairs of distinct members of `selected`;
// cross c is repeated counts[c] times in the returned plan.
CrossPlan random_cross_plan(std::span<const std::size_t> selected,
                            std::span<const std::size_t> counts, RngStream rng);

// The n best upper-triangle cells (diagonal included) of the max-symmetrized
// matrix, ties in row-major order.
CrossPlan pair_score_plan(const PairScores& scores, std::size_t num_crosses);

double discounted_return(std::span<const double> rewards, double gamma);

class EnvCore {
 public:
  EnvCore(std::shared_ptr<const FounderDataset> founders, EnvConfig config);
  virtual ~EnvCore() = default;

  [[nodiscard]] const EnvConfig& config() const noexcept { return config_; }
  [[nodiscard]] const Population& population() const noexcept { return pop_; }
  [[nodiscard]] const TraitModel& model() const noexcept { return founders_->model; }
  [[nodiscard]] const FounderDataset& founders() const noexcept { return *founders_; }
  [[nodiscard]] std::size_t generation() const noexcept { return t_; }
  [[nodiscard]] std::size_t horizon() const noexcept { return config_.horizon; }
  [[nodiscard]] bool done() const noexcept { return started_ && t_ == config_.horizon; }
  [[nodiscard]] std::uint64_t episode_seed() const noexcept { return seed_; }

  // Puts the environment in an arbitrary mid-episode state (checkpoint resume).
  void restore(std::uint64_t seed, Population pop);

 protected:
  void reset_population(std::uint64_t seed);
  // Crosses the plan into the next generation and fills reward and flags.
  template <typename Observation>
  void advance(const CrossPlan& plan, StepResult<Observation>& result);
  void require_running() const;
  [[nodiscard]] RngStream step_stream() const;

  std::shared_ptr<const FounderDataset> founders_;
  EnvConfig config_;
  Population pop_;
  std::size_t t_ = 0;
  std::uint64_t seed_ = 0;
  bool started_ = false;
};

class BreedingGym : public EnvCore {
 public:
  using Observation = Population;
  using Action = CrossPlan;

  BreedingGym(std::shared_ptr<const FounderDataset> founders, EnvConfig config);

  Observation reset(std::uint64_t seed);
  StepResult<Observation> step(const Action& action);
  [[nodiscard]] std::vector<SpaceSpec> observation_space() const;
  [[nodiscard]] std::vector<SpaceSpec> action_space() const;
};

class SimplifiedBreedingGym : public EnvCore {
 public:
  using Observation = TraitCorrelationObservation;
  using Action = SimplifiedAction;

  SimplifiedBreedingGym(std::shared_ptr<const FounderDataset> founders, EnvConfig config);

  Observation reset(std::uint64_t seed);
  StepResult<Observation> step(const Action& action);
  [[nodiscard]] Observation observe() const;
  [[nodiscard]] std::vector<SpaceSpec> observation_space() const;
  [[nodiscard]] std::vector<SpaceSpec> action_space() const;
};

class SelectionScoresEnv : public EnvCore {
 public:
  using Observation = WeightedObservation;
  using Action = std::vector<double>;

  SelectionScoresEnv(std::shared_ptr<const FounderDataset> founders, EnvConfig config);

  Observation reset(std::uint64_t seed);
  StepResult<Observation> step(std::span<const double> scores);
  [[nodiscard]] Observation observe() const;
  [[nodiscard]] std::vector<SpaceSpec> observation_space() const;
  [[nodiscard]] std::vector<SpaceSpec> action_space() const;
};

class PairScoreEnv : public EnvCore {
 public:
  using Observation = WeightedObservation;
  using Action = PairScores;

  PairScoreEnv(std::shared_ptr<const FounderDataset> founders, EnvConfig config);

  Observation reset(std::uint64_t seed);
  StepResult<Observation> step(const Action& scores);
  [[nodiscard]] Observation observe() const;
  [[nodiscard]] std::vector<SpaceSpec> observation_space() const;
  [[nodiscard]] std::vector<SpaceSpec> action_space() const;
};

}  // namespace breedrl
