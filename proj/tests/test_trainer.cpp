#include <doctest.h>

#include <cmath>
#include <numeric>

#include "breedrl/errors.hpp"
#include "breedrl/trainer.hpp"
#include "helpers.hpp"

using namespace breedrl;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.total_steps = 48;
  c.num_envs = 2;
  c.rollout_length = 4;
  c.minibatch_size = 4;
  c.epochs_per_update = 2;
  c.learning_rate = 1e-3;
  c.curriculum = {{0.0, 2}, {0.5, 3}};
  c.master_seed = 17;
  c.env.population_size = 8;
  c.env.num_selected = 3;
  c.env.num_crosses = 2;
  c.eval_episodes = 2;
  c.eval_every_updates = 2;
  c.checkpoint_every_updates = 2;
  return c;
}

std::shared_ptr<const FounderDataset> tiny_data() {
  static const auto ds = testutil::small_dataset(30, 88, 2, 5);
  return ds;
}

RolloutBuffer synthetic_buffer(std::size_t envs, std::size_t steps, RngStream& rng) {
  RolloutBuffer b;
  b.num_envs = envs;
  b.length = steps;
  b.transitions.resize(envs * steps);
  for (auto& t : b.transitions) {
    t.reward = rng.normal();
    t.value = rng.normal();
    t.done = rng.uniform() < 0.3;
  }
  for (std::size_t e = 0; e < envs; ++e) b.bootstrap_values.push_back(rng.normal());
  return b;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("clipped surrogate by hand") {
  CHECK(clipped_surrogate(1.0, 2.0, 0.2) == 2.0);
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(2.4));
  CHECK(clipped_surrogate(1.5, -2.0, 0.2) == doctest::Approx(-3.0));
  CHECK(clipped_surrogate(0.5, 2.0, 0.2) == doctest::Approx(1.0));
  CHECK(clipped_surrogate(0.5, -2.0, 0.2) == doctest::Approx(-1.6));
  CHECK(clipped_surrogate_grad(1.5, 2.0, 0.2) == 0.0);
  CHECK(clipped_surrogate_grad(1.5, -2.0, 0.2) == -2.0);
  CHECK(clipped_surrogate_grad(0.5, -2.0, 0.2) == 0.0);
  CHECK(clipped_surrogate_grad(0.5, 2.0, 0.2) == 2.0);
  // as the clip range shrinks the objective pins to the advantage
  for (double r : {0.7, 0.99, 1.01, 1.3}) {
    CHECK(clipped_surrogate(r, 1.0, 1e-12) == doctest::Approx(std::min(r, 1.0)));
    CHECK(clipped_surrogate_grad(r, 1.0, 1e-12) == (r > 1.0 ? 0.0 : 1.0));
  }
  // derivative agrees with finite differences away from the kinks
  RngStream rng(1, 0);
  for (int i = 0; i < 200; ++i) {
    const double r = 0.5 + rng.uniform();
    const double a = rng.normal();
    if (std::abs(r - 0.8) < 1e-3 || std::abs(r - 1.2) < 1e-3) continue;
    const double fd = (clipped_surrogate(r + 1e-7, a, 0.2) - clipped_surrogate(r - 1e-7, a, 0.2)) / 2e-7;
    REQUIRE(clipped_surrogate_grad(r, a, 0.2) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("GAE with lambda 0 is the one-step TD error") {
  RngStream rng(2, 0);
  auto b = synthetic_buffer(3, 7, rng);
  compute_gae(b, 0.9, 0.0);
  for (std::size_t s = 0; s < 7; ++s) {
    for (std::size_t e = 0; e < 3; ++e) {
      const auto& t = b.at(s, e);
      const double next = s + 1 == 7 ? b.bootstrap_values[e] : b.at(s + 1, e).value;
      const double td = t.reward + (t.done ? 0.0 : 0.9 * next) - t.value;
      REQUIRE(b.advantages[s * 3 + e] == doctest::Approx(td).epsilon(1e-14));
      REQUIRE(b.returns[s * 3 + e] == doctest::Approx(td + t.value).epsilon(1e-14));
    }
  }
}

TEST_CASE("GAE with lambda 1 and gamma 1 is the return minus the value") {
  RngStream rng(3, 0);
  auto b = synthetic_buffer(2, 9, rng);
  compute_gae(b, 1.0, 1.0);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t s = 0; s < 9; ++s) {
      double g = 0.0;
      std::size_t u = s;
      for (; u < 9; ++u) {
        g += b.at(u, e).reward;
        if (b.at(u, e).done) break;
      }
      if (u == 9) g += b.bootstrap_values[e];
      REQUIRE(b.advantages[s * 2 + e] == doctest::Approx(g - b.at(s, e).value).epsilon(1e-12));
      REQUIRE(b.returns[s * 2 + e] == doctest::Approx(g).epsilon(1e-12));
    }
  }
}

TEST_CASE("GAE three-step hand expansion") {
  RolloutBuffer b;
  b.num_envs = 1;
  b.length = 3;
  b.transitions.resize(3);
  const double r[3] = {1.0, -0.5, 2.0}, v[3] = {0.3, 0.1, -0.4};
  for (int i = 0; i < 3; ++i) {
    b.transitions[i].reward = r[i];
    b.transitions[i].value = v[i];
  }
  b.bootstrap_values = {0.7};
  const double g = 0.9, l = 0.8;
  compute_gae(b, g, l);
  const double d0 = r[0] + g * v[1] - v[0];
  const double d1 = r[1] + g * v[2] - v[1];
  const double d2 = r[2] + g * 0.7 - v[2];
  CHECK(b.advantages[2] == doctest::Approx(d2).epsilon(1e-15));
  CHECK(b.advantages[1] == doctest::Approx(d1 + g * l * d2).epsilon(1e-15));
  CHECK(b.advantages[0] == doctest::Approx(d0 + g * l * d1 + g * g * l * l * d2).epsilon(1e-15));

  b.transitions[1].done = true;
  compute_gae(b, g, l);
  CHECK(b.advantages[1] == doctest::Approx(r[1] - v[1]).epsilon(1e-15));
  CHECK(b.advantages[0] == doctest::Approx(d0 + g * l * (r[1] - v[1])).epsilon(1e-15));
}

TEST_CASE("advantage normalization") {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  const auto n = normalize_advantages(a);
  CHECK(std::accumulate(n.begin(), n.end(), 0.0) == doctest::Approx(0.0).scale(1.0));
  double ss = 0;
  for (double x : n) ss += x * x;
  // the divisor is the population std plus a 1e-8 guard
  const double sd = std::sqrt(1.25);
  CHECK(ss / 4 == doctest::Approx(std::pow(sd / (sd + 1e-8), 2)).epsilon(1e-14));
  const auto flat = normalize_advantages(std::vector<double>(5, 3.0));
  for (double x : flat) CHECK(x == 0.0);
}

TEST_CASE("curriculum schedule") {
  TrainConfig c;
  c.curriculum = {{0.0, 3}, {0.5, 10}};
  CHECK(c.horizon_at(0.0) == 3);
  CHECK(c.horizon_at(0.49) == 3);
  CHECK(c.horizon_at(0.5) == 10);
  CHECK(c.horizon_at(1.0) == 10);
  const TrainConfig d;
  CHECK(d.horizon_at(0.0) == 3);
  CHECK(d.horizon_at(1.0) == 10);
  std::size_t last = 0;
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    REQUIRE(d.horizon_at(p) >= last);
    last = d.horizon_at(p);
  }
}

TEST_CASE("config validation") {
  auto bad = [](auto mutate) {
    TrainConfig c = tiny_config();
    mutate(c);
    return c;
  };
  CHECK_NOTHROW(tiny_config().validate());
  CHECK_THROWS_AS(bad([](auto& c) { c.num_envs = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.clip_ratio = 1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.gamma = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.gae_lambda = 1.5; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.curriculum = {{0.1, 3}}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.curriculum = {{0.0, 5}, {0.5, 3}}; }).validate(), ConfigError);
  CHECK_THROWS_AS(bad([](auto& c) { c.curriculum = {{0.0, 3}, {0.0, 5}}; }).validate(), ConfigError);
  CHECK_THROWS_AS(Trainer(nullptr, tiny_config()), ConfigError);
}

TEST_CASE("rollouts: terminal rewards, episode ends and determinism") {
  auto cfg = tiny_config();
  cfg.rollout_length = 7;
  Trainer a(tiny_data(), cfg);
  const auto b1 = a.collect_rollouts();
  REQUIRE(b1.transitions.size() == 14);
  std::size_t ends = 0;
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t s = 0; s < 7; ++s) {
      const auto& t = b1.at(s, e);
      // horizon 2: every second step ends an episode
      CHECK(t.done == (s % 2 == 1));
      if (!t.done) CHECK(t.reward == 0.0);
      ends += t.done ? 1 : 0;
      CHECK(t.action.size() == cfg.env.population_size);
    }
  }
  CHECK(ends == 6);
  CHECK(a.state().envs[0].episodes_started == 4);
  CHECK(a.state().env_steps == 14);

  Trainer b(tiny_data(), cfg);
  const auto b2 = b.collect_rollouts();
  for (std::size_t i = 0; i < b1.transitions.size(); ++i) {
    REQUIRE(b1.transitions[i].action == b2.transitions[i].action);
    REQUIRE(b1.transitions[i].reward == b2.transitions[i].reward);
    REQUIRE(b1.transitions[i].log_prob == b2.transitions[i].log_prob);
  }
  CHECK(b1.bootstrap_values == b2.bootstrap_values);
}

TEST_CASE("first pass over fresh rollouts has unit ratios") {
  auto cfg = tiny_config();
  cfg.epochs_per_update = 1;
  cfg.minibatch_size = 8;  // the whole buffer
  Trainer t(tiny_data(), cfg);
  auto buffer = t.collect_rollouts();
  const auto m = t.ppo_update(buffer);
  CHECK(m.clip_fraction == 0.0);
  CHECK(std::abs(m.approx_kl) < 1e-12);
  // normalized advantages average to zero, so the surrogate does too
  CHECK(std::abs(m.policy_loss) < 1e-9);
  CHECK(m.entropy == doctest::Approx(gaussian_entropy(cfg.env.population_size, 0.0)));
}

TEST_CASE("stop and resume reproduces an uninterrupted run") {
  const auto cfg = tiny_config();
  const auto full_dir = testutil::scratch_dir("train_full");
  const auto part_dir = testutil::scratch_dir("train_part");
  {
    Trainer t(tiny_data(), cfg);
    t.train(full_dir);
    CHECK(t.state().update == 6);
  }
  {
    Trainer t(tiny_data(), cfg);
    t.train(part_dir, 3);
    CHECK(t.state().update == 3);
  }
  {
    Trainer t(tiny_data(), cfg);
    t.load_state(part_dir);
    CHECK(t.state().update == 3);
    t.train(part_dir);
  }
  const auto metrics = testutil::slurp(full_dir / "metrics.csv");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 7);
  CHECK(metrics.substr(0, metrics.find('\n')) == kMetricsHeader);
  CHECK(testutil::slurp(part_dir / "metrics.csv") == metrics);
  CHECK(testutil::slurp(part_dir / "policy.ckpt") == testutil::slurp(full_dir / "policy.ckpt"));
  CHECK(testutil::slurp(part_dir / "trainer_state.bin") ==
        testutil::slurp(full_dir / "trainer_state.bin"));
}

TEST_CASE("training is identical for any worker count") {
  auto cfg = tiny_config();
  const auto d1 = testutil::scratch_dir("train_w1");
  const auto d3 = testutil::scratch_dir("train_w3");
  Trainer(tiny_data(), cfg).train(d1);
  cfg.workers = 3;
  cfg.env.workers = 2;
  Trainer(tiny_data(), cfg).train(d3);
  CHECK(testutil::slurp(d1 / "metrics.csv") == testutil::slurp(d3 / "metrics.csv"));
  CHECK(testutil::slurp(d1 / "policy.ckpt") == testutil::slurp(d3 / "policy.ckpt"));
}

TEST_CASE("evaluation is deterministic and uses fixed seeds") {
  Trainer t(tiny_data(), tiny_config());
  const auto r1 = t.evaluate(t.state().params, 3, 4);
  const auto r2 = t.evaluate(t.state().params, 3, 4);
  CHECK(r1 == r2);
  CHECK(r1.size() == 4);
  CHECK(t.eval_seed(0) != t.eval_seed(1));
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < 4; ++i) seeds.push_back(t.eval_seed(i));
  EnvConfig env = tiny_config().env;
  env.horizon = 3;
  CHECK(evaluate_policy(LearnedPolicy(t.state().params), tiny_data(), env, seeds, 2) == r1);
}

}  // TEST_SUITE
