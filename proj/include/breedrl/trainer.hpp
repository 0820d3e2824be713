#pragma once

// PPO with generalized advantage estimation over parallel SelectionScores
// environments, with a horizon curriculum.
//
// All randomness is addressed by counters derived from master_seed (episode
// seeds, action noise, minibatch shuffles, evaluation seeds), and gradient
// sums are reduced in a fixed order, so a run is bitwise reproducible for any
// worker count and can be stopped and resumed without changing its metrics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "breedrl/baselines.hpp"
#include "breedrl/data_io.hpp"
#include "breedrl/envs.hpp"
#include "breedrl/nnpolicy.hpp"

namespace breedrl {

struct CurriculumStage {
  double progress = 0.0;  // fraction of total_steps at which the stage begins
  std::size_t horizon = 0;

  friend bool operator==(const CurriculumStage&, const CurriculumStage&) = default;
};

struct TrainConfig {
  std::size_t total_steps = 1'000'000;  // environment steps summed over envs
  std::size_t num_envs = 8;
  std::size_t rollout_length = 2048;
  std::size_t minibatch_size = 256;
  std::size_t epochs_per_update = 10;
  double clip_ratio = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  double adam_eps = 1e-5;
  std::vector<CurriculumStage> curriculum{{0.0, 3}, {0.25, 5}, {0.5, 7}, {0.75, 10}};
  std::uint64_t master_seed = 0;

  EnvConfig env;  // horizon is overridden by the curriculum
  NetConfig net;  // input_length is taken from the dataset
  std::size_t eval_episodes = 20;
  std::size_t eval_every_updates = 1;
  std::size_t checkpoint_every_updates = 10;
  unsigned workers = 1;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  [[nodiscard]] std::size_t horizon_at(double progress) const;
};

struct Transition {
  std::shared_ptr<const Population> population;
  double generation_fraction = 0.0;
  std::vector<double> action;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;  // episode terminated after this step
};

// Transitions stored step-major: index = step * num_envs + env.
struct RolloutBuffer {
  std::size_t num_envs = 0;
  std::size_t length = 0;
  std::vector<Transition> transitions;
  std::vector<double> bootstrap_values;  // value of the state after the last step, per env
  std::vector<double> advantages;
  std::vector<double> returns;

  [[nodiscard]] Transition& at(std::size_t step, std::size_t env) {
    return transitions[step * num_envs + env];
  }
  [[nodiscard]] const Transition& at(std::size_t step, std::size_t env) const {
    return transitions[step * num_envs + env];
  }
};

struct UpdateMetrics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

struct EnvSlot {
  SelectionScoresEnv env;
  std::uint64_t episodes_started = 0;
};

// Everything that evolves during training; sufficient for exact resume.
struct TrainingState {
  PolicyParams params;
  AdamState adam;
  std::size_t update = 0;
  std::size_t env_steps = 0;
  std::size_t horizon = 0;
  std::vector<EnvSlot> envs;
  double last_eval_return = 0.0;
};

// Clipped surrogate min(r A, clip(r, 1 - eps, 1 + eps) A) and its derivative in r.
double clipped_surrogate(double ratio, double advantage, double clip);
double clipped_surrogate_grad(double ratio, double advantage, double clip);

// GAE recursion over the buffer (per env, masked at episode ends);
// fills advantages and returns = advantages + values.
void compute_gae(RolloutBuffer& buffer, double gamma, double lambda);

// Normalizes to mean 0 and std 1 (std guarded by 1e-8).
std::vector<double> normalize_advantages(std::span<const double> advantages);

// Deterministic scoring with a trained network.
class LearnedPolicy final : public ScorePolicy {
 public:
  explicit LearnedPolicy(PolicyParams params) : params_(std::move(params)) {}
  [[nodiscard]] std::string name() const override { return "learned"; }
  [[nodiscard]] std::vector<double> act(const WeightedObservation& obs,
                                        RngStream&) const override {
    return score_and_value(obs.genomes, obs.generation_fraction, params_).scores;
  }
  [[nodiscard]] const PolicyParams& params() const noexcept { return params_; }

 private:
  PolicyParams params_;
};

class Trainer {
 public:
  Trainer(std::shared_ptr<const FounderDataset> dataset, TrainConfig config);

  [[nodiscard]] const TrainConfig& config() const noexcept { return config_; }
  [[nodiscard]] TrainingState& state() noexcept { return state_; }
  [[nodiscard]] const TrainingState& state() const noexcept { return state_; }

  // Steps every env for rollout_length steps with sampled actions,
  // auto-resetting finished episodes with fresh seeds.
  RolloutBuffer collect_rollouts();
  UpdateMetrics ppo_update(RolloutBuffer& buffer);
  // Undiscounted return of the deterministic policy per evaluation seed.
  [[nodiscard]] std::vector<double> evaluate(const PolicyParams& params, std::size_t horizon,
                                             std::size_t episodes) const;
  // Resets all envs with the given horizon.
  void rebuild_envs(std::size_t horizon);

  // Runs until total_steps (or `stop_after_updates` more updates), writing
  // metrics.csv, policy.ckpt and trainer_state.bin into `out_dir`.
  void train(const std::filesystem::path& out_dir,
             std::optional<std::size_t> stop_after_updates = std::nullopt);

  void save_state(const std::filesystem::path& dir) const;
  // Restores a state written by save_state() for the same dataset and config.
  void load_state(const std::filesystem::path& dir);

  [[nodiscard]] std::uint64_t eval_seed(std::size_t episode) const;

 private:
  [[nodiscard]] std::uint64_t episode_seed(std::size_t env, std::uint64_t episode) const;
  void reset_slot(std::size_t slot);

  std::shared_ptr<const FounderDataset> dataset_;
  TrainConfig config_;
  TrainingState state_;
};

inline constexpr const char* kMetricsHeader =
    "step,mean_eval_return,policy_loss,value_loss,entropy,clip_fraction,approx_kl,horizon";

// Evaluation returns over `seeds` for any score policy on SelectionScores.
std::vector<double> evaluate_policy(const ScorePolicy& policy,
                                    std::shared_ptr<const FounderDataset> dataset,
                                    const EnvConfig& env, std::span<const std::uint64_t> seeds,
                                    unsigned workers);

}  // namespace breedrl
