#include "breedrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "breedrl/errors.hpp"

namespace breedrl {

namespace {

constexpr std::uint64_t kResetStream = 0x7265'7365'7400'0001ULL;
constexpr std::uint64_t kTransitionStream = 0x7374'6570'0000'0002ULL;

void validate_config(const EnvConfig& c) {
  if (c.population_size == 0) throw ConfigError("population size must be positive");
  if (c.horizon == 0) throw ConfigError("horizon must be positive");
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
}

void validate_selection_config(const EnvConfig& c) {
  if (c.num_selected == 0 || c.num_selected > c.population_size) {
    throw ConfigError("k must lie in [1, n]");
  }
  if (c.num_crosses == 0 || c.num_crosses > c.population_size) {
    throw ConfigError("number of crosses must lie in [1, n]");
  }
}

std::int64_t as_dim(std::size_t x) { return static_cast<std::int64_t>(x); }

}  // namespace

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw ActionError("cannot select more plants than scored");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> offspring_counts(std::size_t total, std::size_t crosses) {
  if (crosses == 0) throw ActionError("need at least one cross");
  std::vector<std::size_t> counts(crosses, total / crosses);
  for (std::size_t c = 0; c < total % crosses; ++c) ++counts[c];
  return counts;
}

CrossPlan random_cross_plan(std::span<const std::size_t> selected,
                            std::span<const std::size_t> counts, RngStream rng) {
  if (selected.empty()) throw ActionError("no plants selected for crossing");
  CrossPlan plan;
  const std::size_t k = selected.size();
  for (std::size_t count : counts) {
    std::size_t a = 0;
    std::size_t b = 0;
    if (k >= 2) {
      a = rng.below(k);
      b = rng.below(k - 1);
      if (b >= a) ++b;
    }
    for (std::size_t r = 0; r < count; ++r) plan.pairs.emplace_back(selected[a], selected[b]);
  }
  return plan;
}

CrossPlan pair_score_plan(const PairScores& scores, std::size_t num_crosses) {
  const std::size_t n = scores.rows;
  struct Cell {
    std::size_t i, j;
    double score;
  };
  std::vector<Cell> cells;
  cells.reserve(n * (n + 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      cells.push_back({i, j, std::max(scores.at(i, j), scores.at(j, i))});
    }
  }
  if (num_crosses > cells.size()) throw ActionError("more crosses requested than cells");
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.score > b.score; });
  CrossPlan plan;
  for (std::size_t c = 0; c < num_crosses; ++c) plan.pairs.emplace_back(cells[c].i, cells[c].j);
  return plan;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

// ---------------------------------------------------------------------------

EnvCore::EnvCore(std::shared_ptr<const FounderDataset> founders, EnvConfig config)
    : founders_(std::move(founders)), config_(config) {
  if (!founders_) throw ConfigError("environment needs a founder dataset");
  founders_->validate();
  validate_config(config_);
}

void EnvCore::reset_population(std::uint64_t seed) {
  const std::size_t pool = founders_->num_founders();
  const std::size_t n = config_.population_size;
  if (pool < n) {
    throw ConfigError("founder pool of " + std::to_string(pool) +
                      " is smaller than the requested population of " + std::to_string(n));
  }
  RngStream rng(seed, kResetStream);
  std::vector<std::size_t> index(pool);
  std::iota(index.begin(), index.end(), std::size_t{0});
  std::vector<Genome> members;
  members.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(pool - i);
    std::swap(index[i], index[j]);
    members.push_back(founders_->genotypes[index[i]]);
  }
  pop_ = Population(std::move(members), 0);
  t_ = 0;
  seed_ = seed;
  started_ = true;
}

void EnvCore::restore(std::uint64_t seed, Population pop) {
  if (pop.size() == 0 || pop.num_loci() != founders_->num_loci()) {
    throw ConfigError("restored population does not match the dataset");
  }
  if (pop.generation > config_.horizon) throw ConfigError("restored generation beyond horizon");
  t_ = pop.generation;
  pop_ = std::move(pop);
  seed_ = seed;
  started_ = true;
}

void EnvCore::require_running() const {
  if (!started_) throw ActionError("environment stepped before reset");
  if (t_ >= config_.horizon) throw ActionError("episode finished; call reset");
}

RngStream EnvCore::step_stream() const { return RngStream(seed_, kTransitionStream).fork(t_); }

template <typename Observation>
void EnvCore::advance(const CrossPlan& plan, StepResult<Observation>& result) {
  const RngStream rng = step_stream().fork(1);
  pop_ = cross_batch(pop_, plan, founders_->map, rng, config_.workers);
  t_ = pop_.generation;

  result.info.traits = estimate_traits(pop_, founders_->model);
  result.info.best_trait = aggregate(result.info.traits, Aggregation::kMax);
  result.info.mean_trait = aggregate(result.info.traits, Aggregation::kMean);
  result.terminated = t_ == config_.horizon;
  result.truncated = false;
  if (config_.reward_mode == RewardMode::kPerStep || result.terminated) {
    result.reward = aggregate(result.info.traits, config_.aggregation);
  } else {
    result.reward = 0.0;
  }
}

// ---------------------------------------------------------------------------

BreedingGym::BreedingGym(std::shared_ptr<const FounderDataset> founders, EnvConfig config)
    : EnvCore(std::move(founders), config) {}

BreedingGym::Observation BreedingGym::reset(std::uint64_t seed) {
  reset_population(seed);
  return pop_;
}

StepResult<BreedingGym::Observation> BreedingGym::step(const Action& action) {
  require_running();
  validate_plan(action, pop_.size());
  StepResult<Observation> result;
  advance(action, result);
  result.observation = pop_;
  return result;
}

std::vector<SpaceSpec> BreedingGym::observation_space() const {
  return {{"genomes", {-1, as_dim(founders_->num_loci()), 2}, "bool", 0.0, 1.0}};
}

std::vector<SpaceSpec> BreedingGym::action_space() const {
  // Indices are bounded by the current population size.
  return {{"pairs", {-1, 2}, "int64", 0.0, HUGE_VAL}};
}

// ---------------------------------------------------------------------------

SimplifiedBreedingGym::SimplifiedBreedingGym(std::shared_ptr<const FounderDataset> founders,
                                             EnvConfig config)
    : EnvCore(std::move(founders), config) {
  if (config_.population_size < 2) throw ConfigError("simplified gym needs n >= 2");
}

SimplifiedBreedingGym::Observation SimplifiedBreedingGym::observe() const {
  return {estimate_traits(pop_, founders_->model), genome_correlation(pop_).values};
}

SimplifiedBreedingGym::Observation SimplifiedBreedingGym::reset(std::uint64_t seed) {
  reset_population(seed);
  return observe();
}

StepResult<SimplifiedBreedingGym::Observation> SimplifiedBreedingGym::step(const Action& action) {
  require_running();
  const std::size_t n = config_.population_size;
  if (action.num_selected < 2 || action.num_selected > n) {
    throw ActionError("n_select must lie in [2, " + std::to_string(n) + "], got " +
                      std::to_string(action.num_selected));
  }
  if (action.num_crosses < 1) throw ActionError("n_crosses must be at least 1");

  const auto traits = estimate_traits(pop_, founders_->model);
  const auto selected = select_top_k(traits, action.num_selected);
  const auto counts = offspring_counts(n, action.num_crosses);
  const auto plan = random_cross_plan(selected, counts, step_stream().fork(0));

  StepResult<Observation> result;
  advance(plan, result);
  result.observation = observe();
  return result;
}

std::vector<SpaceSpec> SimplifiedBreedingGym::observation_space() const {
  const auto n = as_dim(config_.population_size);
  return {{"trait", {n}, "float64", -HUGE_VAL, HUGE_VAL},
          {"correlation", {n}, "float64", -1.0, 1.0}};
}

std::vector<SpaceSpec> SimplifiedBreedingGym::action_space() const {
  const auto n = static_cast<double>(config_.population_size);
  return {{"n_select", {}, "int64", 2.0, n}, {"n_crosses", {}, "int64", 1.0, HUGE_VAL}};
}

// ---------------------------------------------------------------------------

SelectionScoresEnv::SelectionScoresEnv(std::shared_ptr<const FounderDataset> founders,
                                       EnvConfig config)
    : EnvCore(std::move(founders), config) {
  validate_selection_config(config_);
}

SelectionScoresEnv::Observation SelectionScoresEnv::observe() const {
  return {weighted_observation(pop_, founders_->model),
          static_cast<double>(t_) / static_cast<double>(config_.horizon)};
}

SelectionScoresEnv::Observation SelectionScoresEnv::reset(std::uint64_t seed) {
  reset_population(seed);
  return observe();
}

StepResult<SelectionScoresEnv::Observation> SelectionScoresEnv::step(
    std::span<const double> scores) {
  require_running();
  const std::size_t n = config_.population_size;
  if (scores.size() != n) {
    throw ActionError("score vector has length " + std::to_string(scores.size()) +
                      ", expected " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(scores[i])) {
      throw ActionError("score " + std::to_string(i) + " is not finite");
    }
  }
  const auto selected = select_top_k(scores, config_.num_selected);
  const auto counts = offspring_counts(n, config_.num_crosses);
  const auto plan = random_cross_plan(selected, counts, step_stream().fork(0));

  StepResult<Observation> result;
  advance(plan, result);
  result.observation = observe();
  return result;
}

std::vector<SpaceSpec> SelectionScoresEnv::observation_space() const {
  return {{"genomes",
           {as_dim(config_.population_size), as_dim(founders_->num_loci()), 2},
           "float64",
           -HUGE_VAL,
           HUGE_VAL},
          {"generation_fraction", {}, "float64", 0.0, 1.0}};
}

std::vector<SpaceSpec> SelectionScoresEnv::action_space() const {
  return {{"scores", {as_dim(config_.population_size)}, "float64", -HUGE_VAL, HUGE_VAL}};
}

// ---------------------------------------------------------------------------

PairScoreEnv::PairScoreEnv(std::shared_ptr<const FounderDataset> founders, EnvConfig config)
    : EnvCore(std::move(founders), config) {}

PairScoreEnv::Observation PairScoreEnv::observe() const {
  return {weighted_observation(pop_, founders_->model),
          static_cast<double>(t_) / static_cast<double>(config_.horizon)};
}

PairScoreEnv::Observation PairScoreEnv::reset(std::uint64_t seed) {
  reset_population(seed);
  return observe();
}

StepResult<PairScoreEnv::Observation> PairScoreEnv::step(const Action& scores) {
  require_running();
  const std::size_t n = config_.population_size;
  if (scores.rows != n || scores.cols != n || scores.values.size() != n * n) {
    throw ActionError("score matrix has shape (" + std::to_string(scores.rows) + ", " +
                      std::to_string(scores.cols) + "), expected (" + std::to_string(n) + ", " +
                      std::to_string(n) + ")");
  }
  for (std::size_t k = 0; k < scores.values.size(); ++k) {
    if (!std::isfinite(scores.values[k])) {
      throw ActionError("score matrix entry (" + std::to_string(k / n) + ", " +
                        std::to_string(k % n) + ") is not finite");
    }
  }
  const auto plan = pair_score_plan(scores, n);
  StepResult<Observation> result;
  advance(plan, result);
  result.observation = observe();
  return result;
}

std::vector<SpaceSpec> PairScoreEnv::observation_space() const {
  return {{"genomes",
           {as_dim(config_.population_size), as_dim(founders_->num_loci()), 2},
           "float64",
           -HUGE_VAL,
           HUGE_VAL},
          {"generation_fraction", {}, "float64", 0.0, 1.0}};
}

std::vector<SpaceSpec> PairScoreEnv::action_space() const {
  const auto n = as_dim(config_.population_size);
  return {{"pair_scores", {n, n}, "float64", -HUGE_VAL, HUGE_VAL}};
}

}  // namespace breedrl
