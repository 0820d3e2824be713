#include <doctest.h>

#include <fstream>

#include "breedrl/commands.hpp"
#include "breedrl/errors.hpp"
#include "helpers.hpp"

using namespace breedrl;

namespace {

DatasetSource make_data(const std::string& name) {
  const auto dir = testutil::scratch_dir(name);
  GenDataOptions g;
  g.spec.num_founders = 40;
  g.spec.num_loci = 90;
  g.spec.num_chromosomes = 3;
  g.spec.seed = 6;
  g.out_dir = dir;
  cmd_gen_data(g);
  return {dir / "genotypes.txt", dir / "markers.csv", std::nullopt, 0};
}

EnvConfig small_env() {
  EnvConfig e;
  e.population_size = 12;
  e.num_selected = 4;
  e.num_crosses = 3;
  e.horizon = 4;
  return e;
}

}  // namespace

TEST_SUITE("commands") {

TEST_CASE("gen-data writes a loadable dataset and a manifest") {
  const auto src = make_data("gen_data");
  const auto ds = load_source(src);
  CHECK(ds->num_founders() == 40);
  CHECK(ds->num_loci() == 90);
  const auto dir = src.genotypes.parent_path();
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  const auto again = make_data("gen_data_again");
  CHECK(testutil::slurp(src.genotypes) == testutil::slurp(again.genotypes));
  CHECK(testutil::slurp(src.markers) == testutil::slurp(again.markers));
}

TEST_CASE("simulate writes one log per episode") {
  SimulateOptions o;
  o.data = make_data("sim_data");
  o.env_config = small_env();
  o.episodes = 100;
  o.seed = 3;
  o.out_dir = testutil::scratch_dir("sim_out");
  const auto s = cmd_simulate(o);
  CHECK(s.final_best_traits.size() == 100);
  CHECK(std::filesystem::exists(o.out_dir / "episodes" / "episode_0099.csv"));
  const auto log = read_episode_log(o.out_dir / "episodes" / "episode_0000.csv");
  CHECK(log.size() == 5);
  CHECK(log.back().best_trait == s.final_best_traits[0]);
  const auto summary = nlohmann::json::parse(testutil::slurp(o.out_dir / "summary.json"));
  CHECK(summary["final_best_traits"].size() == 100);
}

TEST_CASE("every environment kind runs through simulate") {
  const auto data = make_data("kinds_data");
  for (auto kind : {EnvKind::kBreedingGym, EnvKind::kSimplified, EnvKind::kSelectionScores,
                    EnvKind::kPairScore}) {
    SimulateOptions o;
    o.data = data;
    o.env = kind;
    o.env_config = small_env();
    o.episodes = 3;
    o.out_dir = testutil::scratch_dir("kinds_out");
    CHECK(cmd_simulate(o).final_best_traits.size() == 3);
    CHECK(parse_env_kind(env_kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_env_kind("nope"), UsageError);
}

TEST_CASE("comparing a policy with itself gives zero difference") {
  CompareOptions o;
  o.data = make_data("cmp_data");
  o.env_config = small_env();
  o.policies = {"standard-gs", "standard-gs", "random"};
  o.episodes = 20;
  o.out_dir = testutil::scratch_dir("cmp_out");
  const auto r = cmd_compare(o);
  CHECK(r.final_percent_difference[1] == 0.0);
  CHECK(r.mean_best[0] == r.mean_best[1]);
  CHECK(r.p_value_vs_first[0] == 1.0);
  const auto report = testutil::slurp(o.out_dir / "report.csv");
  CHECK(std::count(report.begin(), report.end(), '\n') == 1 + 5);
  CHECK(report.substr(0, report.find('\n')).starts_with("generation,standard-gs_mean,standard-gs_se"));
}

TEST_CASE("a manifest reproduces its run") {
  SimulateOptions o;
  o.data = make_data("replay_data");
  o.env_config = small_env();
  o.policy = "ohv";
  o.episodes = 6;
  o.seed = 11;
  o.workers = 2;
  o.out_dir = testutil::scratch_dir("replay_a");
  cmd_simulate(o);
  const auto cfg = read_config_file(o.out_dir / "manifest.json");
  CHECK(cfg["policy"] == "ohv");
  CHECK(cfg["seed"] == 11);

  SimulateOptions r;
  apply_json(cfg["data"], r.data);
  apply_json(cfg["env"], r.env_config);
  r.env = parse_env_kind(cfg["env_name"].get<std::string>());
  r.policy = cfg["policy"].get<std::string>();
  r.episodes = cfg["episodes"].get<std::size_t>();
  r.seed = cfg["seed"].get<std::uint64_t>();
  r.workers = 1;
  r.out_dir = testutil::scratch_dir("replay_b");
  cmd_simulate(r);
  for (std::size_t e = 0; e < 6; ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "episode_%04zu.csv", e);
    CHECK(testutil::slurp(o.out_dir / "episodes" / name) ==
          testutil::slurp(r.out_dir / "episodes" / name));
  }
}

TEST_CASE("train config json round trip") {
  TrainConfig c;
  c.total_steps = 1234;
  c.curriculum = {{0.0, 2}, {0.3, 4}};
  c.env.reward_mode = RewardMode::kPerStep;
  c.env.aggregation = Aggregation::kMean;
  c.env.gamma = 0.9;
  TrainConfig back;
  apply_json(to_json(c), back);
  CHECK(back.total_steps == 1234);
  CHECK(back.curriculum == c.curriculum);
  CHECK(back.env.reward_mode == RewardMode::kPerStep);
  CHECK(back.env.aggregation == Aggregation::kMean);
  CHECK(back.env.gamma == 0.9);
  CHECK(to_json(back) == to_json(c));
}

TEST_CASE("policy specs") {
  const auto ds = testutil::small_dataset(20, 88, 2, 1);
  CHECK(make_policy("standard-gs", *ds)->name() == "standard-gs");
  CHECK(make_policy("ohv", *ds)->name() == "ohv");
  CHECK(make_policy("random", *ds)->name() == "random");
  CHECK_THROWS_AS(make_policy("greedy", *ds), UsageError);

  const auto dir = testutil::scratch_dir("policy_specs");
  NetConfig net;
  net.input_length = 100;
  save_checkpoint(dir / "p.ckpt", init_params(net, RngStream(1, 1)));
  CHECK_THROWS_AS(make_policy("learned:" + (dir / "p.ckpt").string(), *ds), ConfigError);
  net.input_length = 88;
  save_checkpoint(dir / "q.ckpt", init_params(net, RngStream(1, 1)));
  CHECK(make_policy("learned:" + (dir / "q.ckpt").string(), *ds)->name() == "learned");
}

TEST_CASE("missing dataset files are usage errors") {
  DatasetSource s{"/nonexistent/genotypes.txt", "/nonexistent/markers.csv", std::nullopt, 0};
  CHECK_THROWS(load_source(s));
}

TEST_CASE("gradcheck command") {
  GradcheckOptions o;
  o.loci = 88;
  o.plants = 2;
  const auto r = cmd_gradcheck(o);
  CHECK(r.max_relative_error < 1e-4);
}

}  // TEST_SUITE
