#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "breedrl/commands.hpp"
#include "breedrl/errors.hpp"

using namespace breedrl;
using nlohmann::json;

namespace {

struct EnvFlags {
  std::string env = "selection-scores";
  std::string reward_mode = "terminal";
  std::string aggregation = "max";
  EnvConfig config;
};

void add_env_flags(CLI::App* cmd, EnvFlags& f, bool with_name) {
  if (with_name) {
    cmd->add_option("--env", f.env, "breeding-gym | simplified | selection-scores | pair-score");
  }
  cmd->add_option("--population", f.config.population_size, "plants per generation (n)");
  cmd->add_option("--select", f.config.num_selected, "plants selected per generation (k)");
  cmd->add_option("--crosses", f.config.num_crosses, "crosses per generation (l)");
  cmd->add_option("--generations", f.config.horizon, "episode length (T)");
  cmd->add_option("--reward-mode", f.reward_mode, "terminal | per_step");
  cmd->add_option("--aggregation", f.aggregation, "max | mean");
}

EnvConfig resolve_env(const EnvFlags& f) {
  EnvConfig c = f.config;
  apply_json(json{{"reward_mode", f.reward_mode}, {"aggregation", f.aggregation}}, c);
  return c;
}

void add_data_flags(CLI::App* cmd, DatasetSource& s, std::optional<std::size_t>& subset) {
  cmd->add_option("--genotypes", s.genotypes, "founder genotype file");
  cmd->add_option("--markers", s.markers, "marker map CSV");
  cmd->add_option("--subset-markers", subset, "use a random subset of this many markers");
  cmd->add_option("--subset-seed", s.subset_seed, "seed of the marker subset");
}

template <typename T>
void take(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

int run(int argc, char** argv) {
  CLI::App app{"Breeding program simulation and reinforcement learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersionTag));

  std::string config_path;

  // gen-data
  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic founder dataset");
  gen_cmd->add_option("--founders", gen.spec.num_founders, "founder genotypes");
  gen_cmd->add_option("--markers", gen.spec.num_loci, "markers per genotype");
  gen_cmd->add_option("--chromosomes", gen.spec.num_chromosomes, "chromosomes");
  gen_cmd->add_option("--seed", gen.spec.seed, "random seed");
  gen_cmd->add_option("--freq-spread", gen.spec.allele_freq_spread, "Beta shape of allele frequencies");
  gen_cmd->add_option("--effect-scale", gen.spec.effect_scale, "standard deviation of marker effects");
  gen_cmd->add_option("--out", gen.out_dir, "output directory");
  gen_cmd->add_option("--config", config_path, "JSON config or manifest");

  // simulate
  SimulateOptions sim;
  EnvFlags sim_env;
  std::optional<std::size_t> sim_subset;
  auto* sim_cmd = app.add_subcommand("simulate", "run episodes of a fixed policy");
  add_data_flags(sim_cmd, sim.data, sim_subset);
  add_env_flags(sim_cmd, sim_env, true);
  sim_cmd->add_option("--policy", sim.policy, "standard-gs | ohv | random | learned:<checkpoint>");
  sim_cmd->add_option("--episodes", sim.episodes, "episodes");
  sim_cmd->add_option("--seed", sim.seed, "master seed");
  sim_cmd->add_option("--workers", sim.workers, "worker threads (0 = all cores)");
  sim_cmd->add_option("--out", sim.out_dir, "output directory");
  sim_cmd->add_option("--config", config_path, "JSON config or manifest");

  // train
  TrainOptions train;
  EnvFlags train_env;
  std::optional<std::size_t> train_subset;
  std::optional<std::string> resume;
  auto* train_cmd = app.add_subcommand("train", "train a selection policy with PPO");
  add_data_flags(train_cmd, train.data, train_subset);
  add_env_flags(train_cmd, train_env, false);
  auto& tc = train.config;
  train_cmd->add_option("--total-steps", tc.total_steps, "environment steps");
  train_cmd->add_option("--num-envs", tc.num_envs, "parallel environments");
  train_cmd->add_option("--rollout-length", tc.rollout_length, "steps per env per update");
  train_cmd->add_option("--minibatch-size", tc.minibatch_size, "minibatch size");
  train_cmd->add_option("--epochs", tc.epochs_per_update, "epochs per update");
  train_cmd->add_option("--learning-rate", tc.learning_rate, "Adam learning rate");
  train_cmd->add_option("--clip-ratio", tc.clip_ratio, "PPO clip ratio");
  train_cmd->add_option("--gamma", tc.gamma, "discount");
  train_cmd->add_option("--gae-lambda", tc.gae_lambda, "GAE lambda");
  train_cmd->add_option("--entropy-coef", tc.entropy_coef, "entropy bonus");
  train_cmd->add_option("--eval-episodes", tc.eval_episodes, "evaluation episodes");
  train_cmd->add_option("--eval-every", tc.eval_every_updates, "updates between evaluations");
  train_cmd->add_option("--checkpoint-every", tc.checkpoint_every_updates,
                        "updates between checkpoints");
  train_cmd->add_option("--seed", tc.master_seed, "master seed");
  train_cmd->add_option("--workers", tc.workers, "worker threads (0 = all cores)");
  train_cmd->add_option("--resume", resume, "directory holding a previous trainer state");
  train_cmd->add_option("--stop-after-updates", train.stop_after_updates,
                        "stop after this many updates");
  train_cmd->add_option("--out", train.out_dir, "output directory");
  train_cmd->add_option("--config", config_path, "JSON config or manifest");

  // compare
  CompareOptions cmp;
  EnvFlags cmp_env;
  std::optional<std::size_t> cmp_subset;
  auto* cmp_cmd = app.add_subcommand("compare", "paired-seed comparison of policies");
  add_data_flags(cmp_cmd, cmp.data, cmp_subset);
  add_env_flags(cmp_cmd, cmp_env, true);
  cmp_cmd->add_option("--policy", cmp.policies, "policy spec; repeat for each policy");
  cmp_cmd->add_option("--episodes", cmp.episodes, "episodes per policy");
  cmp_cmd->add_option("--seed", cmp.seed, "master seed");
  cmp_cmd->add_option("--workers", cmp.workers, "worker threads (0 = all cores)");
  cmp_cmd->add_option("--out", cmp.out_dir, "output directory");
  cmp_cmd->add_option("--config", config_path, "JSON config or manifest");

  // gradcheck
  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "check policy gradients by finite differences");
  gc_cmd->add_option("--loci", gc.loci, "markers in the random input");
  gc_cmd->add_option("--plants", gc.plants, "plants in the random input");
  gc_cmd->add_option("--eps", gc.eps, "finite-difference step");
  gc_cmd->add_option("--seed", gc.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  std::optional<json> config;
  if (!config_path.empty()) config = read_config_file(config_path);

  auto require_out = [](const std::filesystem::path& out) {
    if (out.empty()) throw UsageError("--out is required");
  };

  if (*gen_cmd) {
    if (config) {
      take(*config, "founders", gen.spec.num_founders);
      take(*config, "markers", gen.spec.num_loci);
      take(*config, "chromosomes", gen.spec.num_chromosomes);
      take(*config, "seed", gen.spec.seed);
      take(*config, "allele_freq_spread", gen.spec.allele_freq_spread);
      take(*config, "effect_scale", gen.spec.effect_scale);
      if (gen.out_dir.empty() && config->contains("out")) {
        gen.out_dir = config->at("out").get<std::string>();
      }
    }
    require_out(gen.out_dir);
    cmd_gen_data(gen);
    std::cout << "wrote " << (gen.out_dir / "genotypes.txt").string() << " and "
              << (gen.out_dir / "markers.csv").string() << '\n';
    return 0;
  }

  if (*sim_cmd) {
    if (sim_subset) sim.data.subset_markers = sim_subset;
    sim.env = parse_env_kind(sim_env.env);
    sim.env_config = resolve_env(sim_env);
    if (config) {
      if (config->contains("data")) apply_json(config->at("data"), sim.data);
      if (config->contains("env_name")) sim.env = parse_env_kind(config->at("env_name"));
      if (config->contains("env")) apply_json(config->at("env"), sim.env_config);
      take(*config, "policy", sim.policy);
      take(*config, "episodes", sim.episodes);
      take(*config, "seed", sim.seed);
      take(*config, "workers", sim.workers);
    }
    require_out(sim.out_dir);
    const auto summary = cmd_simulate(sim);
    std::printf("episodes %zu  final best trait %.6g +- %.3g (SE)\n",
                summary.final_best_traits.size(), summary.mean, summary.standard_error);
    return 0;
  }

  if (*train_cmd) {
    if (train_subset) train.data.subset_markers = train_subset;
    tc.env = resolve_env(train_env);
    if (resume) train.resume = std::filesystem::path(*resume);
    if (config) {
      if (config->contains("data")) apply_json(config->at("data"), train.data);
      if (config->contains("train")) apply_json(config->at("train"), tc);
      take(*config, "workers", tc.workers);
    }
    require_out(train.out_dir);
    cmd_train(train);
    std::cout << "wrote " << (train.out_dir / "policy.ckpt").string() << '\n';
    return 0;
  }

  if (*cmp_cmd) {
    if (cmp_subset) cmp.data.subset_markers = cmp_subset;
    cmp.env = parse_env_kind(cmp_env.env);
    cmp.env_config = resolve_env(cmp_env);
    if (config) {
      if (config->contains("data")) apply_json(config->at("data"), cmp.data);
      if (config->contains("env_name")) cmp.env = parse_env_kind(config->at("env_name"));
      if (config->contains("env")) apply_json(config->at("env"), cmp.env_config);
      take(*config, "policies", cmp.policies);
      take(*config, "episodes", cmp.episodes);
      take(*config, "seed", cmp.seed);
      take(*config, "workers", cmp.workers);
    }
    require_out(cmp.out_dir);
    const auto report = cmd_compare(cmp);
    for (std::size_t p = 0; p < report.policies.size(); ++p) {
      std::printf("%-24s final %.6g +- %.3g  diff %+.3f%%  p=%.3g\n", report.policies[p].c_str(),
                  report.mean_best[p].back(), report.se_best[p].back(),
                  report.final_percent_difference[p], report.p_value_vs_first[p]);
    }
    return 0;
  }

  if (*gc_cmd) {
    const auto r = cmd_gradcheck(gc);
    std::printf("max relative error %.3e (%s[%zu]) over %zu parameters\n", r.max_relative_error,
                r.worst_parameter.c_str(), r.worst_index, r.checked);
    return r.max_relative_error < 1e-4 ? 0 : 1;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::invalid_argument& e) {
    // UsageError, ConfigError, ActionError
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
