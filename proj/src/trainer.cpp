#include "breedrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "breedrl/archive.hpp"
#include "breedrl/errors.hpp"
#include "breedrl/parallel.hpp"

namespace breedrl {

namespace {

constexpr std::uint64_t kEpisodeSeedStream = 0x6570'6973'6F64'6501ULL;
constexpr std::uint64_t kActionStream = 0x6163'7469'6F6E'0002ULL;
constexpr std::uint64_t kShuffleStream = 0x7368'7566'666C'0003ULL;
constexpr std::uint64_t kEvalStream = 0x6576'616C'0000'0004ULL;
constexpr std::uint64_t kInitStream = 0x696E'6974'0000'0005ULL;

constexpr ArchiveMagic kStateMagic{'B', 'R', 'L', 'T', 'R', 'A', 'I', 'N'};
constexpr std::uint32_t kStateVersion = 1;

// Transitions per gradient chunk. Chunks are reduced in index order, which
// keeps the summation order independent of the worker count.
constexpr std::size_t kGradChunk = 8;

struct SampleStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clipped = 0.0;
  double approx_kl = 0.0;
};

std::string metrics_row(std::size_t step, std::optional<double> eval, const UpdateMetrics& m,
                        std::size_t horizon) {
  std::string row = std::to_string(step) + ",";
  if (eval) row += format_double(*eval);
  row += "," + format_double(m.policy_loss) + "," + format_double(m.value_loss) + "," +
         format_double(m.entropy) + "," + format_double(m.clip_fraction) + "," +
         format_double(m.approx_kl) + "," + std::to_string(horizon);
  return row;
}

}  // namespace

void TrainConfig::validate() const {
  if (total_steps == 0 || num_envs == 0 || rollout_length == 0 || minibatch_size == 0 ||
      epochs_per_update == 0) {
    throw ConfigError("training sizes must be positive");
  }
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw ConfigError("clip_ratio must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in (0, 1]");
  if (!(learning_rate >= 0.0) || !(max_grad_norm > 0.0) || !(adam_eps > 0.0)) {
    throw ConfigError("learning_rate, max_grad_norm and adam_eps out of range");
  }
  if (curriculum.empty() || curriculum.front().progress != 0.0) {
    throw ConfigError("curriculum must start at progress 0");
  }
  for (std::size_t i = 0; i < curriculum.size(); ++i) {
    if (curriculum[i].horizon == 0) throw ConfigError("curriculum horizons must be positive");
    if (i > 0 && (curriculum[i].progress <= curriculum[i - 1].progress ||
                  curriculum[i].horizon < curriculum[i - 1].horizon)) {
      throw ConfigError("curriculum must have increasing progress and non-decreasing horizons");
    }
  }
  if (eval_episodes == 0 || eval_every_updates == 0 || checkpoint_every_updates == 0) {
    throw ConfigError("evaluation and checkpoint intervals must be positive");
  }
}

std::size_t TrainConfig::horizon_at(double progress) const {
  std::size_t horizon = curriculum.front().horizon;
  for (const auto& stage : curriculum) {
    if (progress >= stage.progress) horizon = stage.horizon;
  }
  return horizon;
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double clip) {
  if (advantage > 0.0 && ratio > 1.0 + clip) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - clip) return 0.0;
  return advantage;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double lambda) {
  const std::size_t envs = buffer.num_envs;
  const std::size_t steps = buffer.length;
  buffer.advantages.assign(envs * steps, 0.0);
  buffer.returns.assign(envs * steps, 0.0);
  for (std::size_t e = 0; e < envs; ++e) {
    double running = 0.0;
    for (std::size_t s = steps; s-- > 0;) {
      const auto& tr = buffer.at(s, e);
      const double next_value =
          s + 1 == steps ? buffer.bootstrap_values[e] : buffer.at(s + 1, e).value;
      const double nonterminal = tr.done ? 0.0 : 1.0;
      const double delta = tr.reward + gamma * next_value * nonterminal - tr.value;
      running = delta + gamma * lambda * nonterminal * running;
      buffer.advantages[s * envs + e] = running;
      buffer.returns[s * envs + e] = running + tr.value;
    }
  }
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : advantages) ss += (a - mean) * (a - mean);
  const double std = std::sqrt(ss / n);
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (advantages[i] - mean) / (std + 1e-8);
  return out;
}

std::vector<double> evaluate_policy(const ScorePolicy& policy,
                                    std::shared_ptr<const FounderDataset> dataset,
                                    const EnvConfig& env, std::span<const std::uint64_t> seeds,
                                    unsigned workers) {
  std::vector<double> returns(seeds.size());
  parallel_for(seeds.size(), workers, [&](std::size_t i) {
    SelectionScoresEnv e(dataset, env);
    auto obs = e.reset(seeds[i]);
    RngStream policy_rng(seeds[i], kActionStream);
    double total = 0.0;
    while (!e.done()) {
      RngStream step_rng = policy_rng.fork(e.generation());
      auto result = e.step(policy.act(obs, step_rng));
      total += result.reward;
      obs = std::move(result.observation);
    }
    returns[i] = total;
  });
  return returns;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(std::shared_ptr<const FounderDataset> dataset, TrainConfig config)
    : dataset_(std::move(dataset)), config_(std::move(config)) {
  if (!dataset_) throw ConfigError("trainer needs a dataset");
  config_.net.input_length = dataset_->num_loci();
  config_.validate();
  config_.net.validate();
  state_.params = init_params(config_.net, RngStream(config_.master_seed, kInitStream));
  state_.adam.m.assign(state_.params.values.size(), 0.0);
  state_.adam.v.assign(state_.params.values.size(), 0.0);
  rebuild_envs(config_.horizon_at(0.0));
}

std::uint64_t Trainer::episode_seed(std::size_t env, std::uint64_t episode) const {
  return RngStream(config_.master_seed, kEpisodeSeedStream).fork(env).fork(episode).next_u64();
}

std::uint64_t Trainer::eval_seed(std::size_t episode) const {
  return RngStream(config_.master_seed, kEvalStream).fork(episode).next_u64();
}

void Trainer::reset_slot(std::size_t slot) {
  auto& s = state_.envs[slot];
  s.env.reset(episode_seed(slot, s.episodes_started));
  ++s.episodes_started;
}

void Trainer::rebuild_envs(std::size_t horizon) {
  EnvConfig env = config_.env;
  env.horizon = horizon;
  env.workers = 1;
  std::vector<std::uint64_t> started(config_.num_envs, 0);
  for (std::size_t i = 0; i < state_.envs.size() && i < started.size(); ++i) {
    started[i] = state_.envs[i].episodes_started;
  }
  state_.envs.clear();
  for (std::size_t i = 0; i < config_.num_envs; ++i) {
    state_.envs.push_back({SelectionScoresEnv(dataset_, env), started[i]});
  }
  state_.horizon = horizon;
  for (std::size_t i = 0; i < state_.envs.size(); ++i) reset_slot(i);
}

RolloutBuffer Trainer::collect_rollouts() {
  RolloutBuffer buffer;
  buffer.num_envs = config_.num_envs;
  buffer.length = config_.rollout_length;
  buffer.transitions.resize(buffer.num_envs * buffer.length);
  buffer.bootstrap_values.assign(buffer.num_envs, 0.0);
  const PolicyParams& params = state_.params;
  const double log_std = params.values.back();
  const RngStream action_root = RngStream(config_.master_seed, kActionStream).fork(state_.update);

  parallel_for(config_.num_envs, config_.workers, [&](std::size_t e) {
    auto& slot = state_.envs[e];
    RngStream env_rng = action_root.fork(e);
    for (std::size_t s = 0; s < buffer.length; ++s) {
      auto& tr = buffer.at(s, e);
      tr.population = std::make_shared<const Population>(slot.env.population());
      const auto obs = slot.env.observe();
      tr.generation_fraction = obs.generation_fraction;
      const auto out = score_and_value(obs.genomes, obs.generation_fraction, params);
      RngStream step_rng = env_rng.fork(s);
      tr.action = sample_action(out.scores, log_std, step_rng);
      tr.log_prob = log_prob(out.scores, log_std, tr.action);
      tr.value = out.value;
      const auto result = slot.env.step(tr.action);
      tr.reward = result.reward;
      tr.done = result.terminated;
      if (slot.env.done()) {
        slot.env.reset(episode_seed(e, slot.episodes_started));
        ++slot.episodes_started;
      }
    }
    const auto obs = slot.env.observe();
    buffer.bootstrap_values[e] =
        score_and_value(obs.genomes, obs.generation_fraction, params).value;
  });
  state_.env_steps += buffer.num_envs * buffer.length;
  return buffer;
}

UpdateMetrics Trainer::ppo_update(RolloutBuffer& buffer) {
  const std::size_t total = buffer.transitions.size();
  if (buffer.advantages.size() != total) compute_gae(buffer, config_.gamma, config_.gae_lambda);
  const auto advantages = normalize_advantages(buffer.advantages);
  PolicyParams& params = state_.params;
  const ParamLayout layout(params.config);
  const std::size_t num_params = params.values.size();
  const std::size_t log_std_index = layout.log_std;
  const double clip = config_.clip_ratio;

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const RngStream shuffle_root = RngStream(config_.master_seed, kShuffleStream).fork(state_.update);

  SampleStats sums;
  std::size_t samples = 0;
  std::vector<double> grad(num_params);

  for (std::size_t epoch = 0; epoch < config_.epochs_per_update; ++epoch) {
    RngStream shuffle = shuffle_root.fork(epoch);
    for (std::size_t i = total; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    for (std::size_t start = 0; start < total; start += config_.minibatch_size) {
      const std::size_t end = std::min(total, start + config_.minibatch_size);
      const std::size_t batch = end - start;
      const std::size_t chunks = (batch + kGradChunk - 1) / kGradChunk;
      std::vector<std::vector<double>> chunk_grads(chunks);
      std::vector<SampleStats> chunk_stats(chunks);
      const double log_std = params.values[log_std_index];

      parallel_for(chunks, config_.workers, [&](std::size_t c) {
        auto& g = chunk_grads[c];
        g.assign(num_params, 0.0);
        auto& st = chunk_stats[c];
        ForwardCache cache;
        const std::size_t lo = start + c * kGradChunk;
        const std::size_t hi = std::min(end, lo + kGradChunk);
        for (std::size_t b = lo; b < hi; ++b) {
          const std::size_t idx = order[b];
          const auto& tr = buffer.transitions[idx];
          const double adv = advantages[idx];
          const double ret = buffer.returns[idx];
          const auto obs = weighted_observation(*tr.population, dataset_->model);
          const auto out = score_and_value(obs, tr.generation_fraction, params, &cache);
          const double new_log_prob = log_prob(out.scores, log_std, tr.action);
          const double log_ratio = new_log_prob - tr.log_prob;
          const double ratio = std::exp(log_ratio);
          const std::size_t n = out.scores.size();
          const double entropy = gaussian_entropy(n, log_std);
          const double policy_loss = -clipped_surrogate(ratio, adv, clip);
          const double value_err = out.value - ret;

          st.policy_loss += policy_loss;
          st.value_loss += value_err * value_err;
          st.entropy += entropy;
          st.clipped += std::abs(ratio - 1.0) > clip ? 1.0 : 0.0;
          st.approx_kl += (ratio - 1.0) - log_ratio;

          const double scale = 1.0 / static_cast<double>(batch);
          // d(policy_loss)/d(log_prob) = -dsurrogate/dratio * ratio
          const double dlogp = -clipped_surrogate_grad(ratio, adv, clip) * ratio * scale;
          const double inv_var = std::exp(-2.0 * log_std);
          std::vector<double> dscores(n);
          double dlog_std = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double diff = tr.action[i] - out.scores[i];
            dscores[i] = dlogp * diff * inv_var;
            dlog_std += dlogp * (diff * diff * inv_var - 1.0);
          }
          dlog_std -= config_.entropy_coef * static_cast<double>(n) * scale;
          const double dvalue = 2.0 * config_.value_coef * value_err * scale;
          backward(cache, dscores, dvalue, params, g);
          g[log_std_index] += dlog_std;
        }
      });

      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t c = 0; c < chunks; ++c) {
        for (std::size_t k = 0; k < num_params; ++k) grad[k] += chunk_grads[c][k];
        sums.policy_loss += chunk_stats[c].policy_loss;
        sums.value_loss += chunk_stats[c].value_loss;
        sums.entropy += chunk_stats[c].entropy;
        sums.clipped += chunk_stats[c].clipped;
        sums.approx_kl += chunk_stats[c].approx_kl;
      }
      samples += batch;

      double norm_sq = 0.0;
      for (double x : grad) norm_sq += x * x;
      if (!std::isfinite(norm_sq) || !std::isfinite(sums.policy_loss) ||
          !std::isfinite(sums.value_loss)) {
        throw NumericalError("non-finite loss or gradient in PPO update " +
                             std::to_string(state_.update));
      }
      const double norm = std::sqrt(norm_sq);
      if (norm > config_.max_grad_norm) {
        const double shrink = config_.max_grad_norm / (norm + 1e-6);
        for (double& x : grad) x *= shrink;
      }

      auto& adam = state_.adam;
      ++adam.step;
      constexpr double kBeta1 = 0.9;
      constexpr double kBeta2 = 0.999;
      const double correction1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam.step));
      const double correction2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam.step));
      const double step_size = config_.learning_rate / correction1;
      const double sqrt_correction2 = std::sqrt(correction2);
      for (std::size_t k = 0; k < num_params; ++k) {
        adam.m[k] = kBeta1 * adam.m[k] + (1.0 - kBeta1) * grad[k];
        adam.v[k] = kBeta2 * adam.v[k] + (1.0 - kBeta2) * grad[k] * grad[k];
        const double denom = std::sqrt(adam.v[k]) / sqrt_correction2 + config_.adam_eps;
        params.values[k] -= step_size * adam.m[k] / denom;
      }
    }
  }

  const double count = static_cast<double>(samples);
  return {sums.policy_loss / count, sums.value_loss / count, sums.entropy / count,
          sums.clipped / count, sums.approx_kl / count};
}

std::vector<double> Trainer::evaluate(const PolicyParams& params, std::size_t horizon,
                                      std::size_t episodes) const {
  EnvConfig env = config_.env;
  env.horizon = horizon;
  env.workers = 1;
  std::vector<std::uint64_t> seeds(episodes);
  for (std::size_t i = 0; i < episodes; ++i) seeds[i] = eval_seed(i);
  return evaluate_policy(LearnedPolicy(params), dataset_, env, seeds, config_.workers);
}

void Trainer::train(const std::filesystem::path& out_dir,
                    std::optional<std::size_t> stop_after_updates) {
  std::filesystem::create_directories(out_dir);
  const auto metrics_path = out_dir / "metrics.csv";
  std::vector<std::string> rows;
  if (state_.update > 0 && std::filesystem::exists(metrics_path)) {
    std::ifstream in(metrics_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line) && rows.size() < state_.update) {
      if (!line.empty()) rows.push_back(line);
    }
  }
  auto write_metrics = [&] {
    std::ofstream out(metrics_path, std::ios::trunc);
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) out << r << '\n';
    if (!out) throw std::runtime_error("failed writing " + metrics_path.string());
  };

  std::size_t updates_this_call = 0;
  while (state_.env_steps < config_.total_steps) {
    if (stop_after_updates && updates_this_call >= *stop_after_updates) break;
    const double progress =
        static_cast<double>(state_.env_steps) / static_cast<double>(config_.total_steps);
    const std::size_t horizon = config_.horizon_at(progress);
    if (horizon != state_.horizon) rebuild_envs(horizon);

    auto buffer = collect_rollouts();
    compute_gae(buffer, config_.gamma, config_.gae_lambda);
    UpdateMetrics metrics;
    try {
      metrics = ppo_update(buffer);
    } catch (const NumericalError&) {
      save_checkpoint(out_dir / "crash.ckpt", state_.params);
      throw;
    }
    ++state_.update;
    ++updates_this_call;

    std::optional<double> eval;
    const bool last = state_.env_steps >= config_.total_steps;
    if (state_.update % config_.eval_every_updates == 0 || last) {
      const auto returns = evaluate(state_.params, state_.horizon, config_.eval_episodes);
      eval = aggregate(returns, Aggregation::kMean);
      state_.last_eval_return = *eval;
    }
    rows.push_back(metrics_row(state_.env_steps, eval, metrics, state_.horizon));
    write_metrics();
    if (state_.update % config_.checkpoint_every_updates == 0 || last) save_state(out_dir);
  }
  write_metrics();
  save_state(out_dir);
}

void Trainer::save_state(const std::filesystem::path& dir) const {
  save_checkpoint(dir / "policy.ckpt", state_.params);
  std::vector<ArchiveTensor> tensors;
  tensors.push_back({"adam.m", {state_.adam.m.size()}, state_.adam.m});
  tensors.push_back({"adam.v", {state_.adam.v.size()}, state_.adam.v});
  tensors.push_back({"scalars",
                     {5},
                     std::vector<std::uint64_t>{state_.update, state_.env_steps, state_.horizon,
                                                state_.adam.step, state_.envs.size()}});
  tensors.push_back({"last_eval_return", {1}, std::vector<double>{state_.last_eval_return}});
  for (std::size_t i = 0; i < state_.envs.size(); ++i) {
    const auto& slot = state_.envs[i];
    const auto& pop = slot.env.population();
    tensors.push_back({"env" + std::to_string(i) + ".meta",
                       {3},
                       std::vector<std::uint64_t>{slot.env.episode_seed(), slot.episodes_started,
                                                  pop.generation}});
    std::vector<std::uint8_t> alleles;
    alleles.reserve(pop.size() * pop.num_loci() * 2);
    for (const auto& g : pop.members) alleles.insert(alleles.end(), g.data().begin(), g.data().end());
    tensors.push_back({"env" + std::to_string(i) + ".population",
                       {pop.size(), pop.num_loci() * 2},
                       std::move(alleles)});
  }
  write_archive(dir / "trainer_state.bin", kStateMagic, kStateVersion, tensors);
}

void Trainer::load_state(const std::filesystem::path& dir) {
  auto params = load_checkpoint(dir / "policy.ckpt", dataset_->num_loci());
  if (!(params.config == config_.net)) {
    throw ConfigError("checkpoint network configuration differs from the training config");
  }
  const auto tensors = read_archive(dir / "trainer_state.bin", kStateMagic, kStateVersion);
  const auto& scalars = tensor_u64(tensors, "scalars");
  if (scalars.size() != 5 || scalars[4] != config_.num_envs) {
    throw ConfigError("trainer state was written for a different number of environments");
  }
  state_.params = std::move(params);
  state_.adam.m = tensor_f64(tensors, "adam.m");
  state_.adam.v = tensor_f64(tensors, "adam.v");
  if (state_.adam.m.size() != state_.params.values.size() ||
      state_.adam.v.size() != state_.params.values.size()) {
    throw ConfigError("optimizer state does not match the network");
  }
  state_.update = scalars[0];
  state_.env_steps = scalars[1];
  state_.adam.step = scalars[3];
  state_.last_eval_return = tensor_f64(tensors, "last_eval_return").at(0);

  EnvConfig env = config_.env;
  env.horizon = scalars[2];
  env.workers = 1;
  state_.horizon = env.horizon;
  state_.envs.clear();
  const std::size_t m = dataset_->num_loci();
  for (std::size_t i = 0; i < config_.num_envs; ++i) {
    const auto& meta = tensor_u64(tensors, "env" + std::to_string(i) + ".meta");
    const auto& pop_t = find_tensor(tensors, "env" + std::to_string(i) + ".population");
    const auto& alleles = tensor_u8(tensors, pop_t.name);
    if (meta.size() != 3 || pop_t.shape.size() != 2 || pop_t.shape[1] != 2 * m) {
      throw ConfigError("malformed environment state in trainer_state.bin");
    }
    std::vector<Genome> members;
    for (std::size_t p = 0; p < pop_t.shape[0]; ++p) {
      members.emplace_back(std::vector<std::uint8_t>(alleles.begin() + static_cast<long>(p * 2 * m),
                                                     alleles.begin() + static_cast<long>((p + 1) * 2 * m)));
    }
    EnvSlot slot{SelectionScoresEnv(dataset_, env), meta[1]};
    slot.env.restore(meta[0], Population(std::move(members), meta[2]));
    state_.envs.push_back(std::move(slot));
  }
}

}  // namespace breedrl
