#include <doctest.h>

#include <cmath>

#include "breedrl/baselines.hpp"
#include "breedrl/errors.hpp"
#include "helpers.hpp"

using namespace breedrl;

namespace {

WeightedObservation observe(const Population& pop, const TraitModel& model) {
  return {weighted_observation(pop, model), 0.0};
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("standard GS scores are the estimated traits") {
  RngStream rng(1, 0);
  const auto pop = testutil::random_population(12, 80, rng);
  const TraitModel model(testutil::random_weights(80, rng));
  const auto s = standard_gs(observe(pop, model));
  for (std::size_t i = 0; i < pop.size(); ++i) {
    double oracle = 0;
    for (std::size_t j = 0; j < 80; ++j) {
      oracle += model.weights[j] * (pop[i].allele(j, 0) + pop[i].allele(j, 1));
    }
    CHECK(s[i] == estimate_trait(pop[i], model));
    CHECK(s[i] == doctest::Approx(oracle).epsilon(1e-12));
  }
  const Population twins({pop[3], pop[3]}, 0);
  const auto t = standard_gs(observe(twins, model));
  CHECK(t[0] == t[1]);
}

TEST_CASE("OHV scores match the genome oracle") {
  RngStream rng(2, 0);
  const auto pop = testutil::random_population(12, 80, rng);
  const TraitModel model(testutil::random_weights(80, rng));
  const auto s = ohv_scores(observe(pop, model), model);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    CHECK(s[i] == doctest::Approx(optimal_haploid_value(pop[i], model)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(ohv_scores(observe(pop, model), TraitModel(std::vector<double>(79, 1.0))),
                  ConfigError);
}

TEST_CASE("OHV ranks like standard GS on homozygous plants") {
  RngStream rng(3, 0);
  std::vector<Genome> members;
  for (int i = 0; i < 15; ++i) {
    const auto h = testutil::random_genome(40, rng).haplotype(0);
    members.emplace_back(h, h);
  }
  const Population pop(members, 0);
  const TraitModel model(testutil::random_weights(40, rng));
  const auto gs = standard_gs(observe(pop, model));
  const auto ohv = ohv_scores(observe(pop, model), model);
  CHECK(select_top_k(gs, 5) == select_top_k(ohv, 5));
}

TEST_CASE("OHV prefers the heterozygote of equal trait") {
  const TraitModel model({1.0, 1.0});
  const Genome het(std::vector<std::uint8_t>{1, 0, 0, 1});   // trait 2, OHV 4
  const Genome homo(std::vector<std::uint8_t>{1, 1, 0, 0});  // trait 2, OHV 2
  const Population pop({homo, het}, 0);
  const auto gs = standard_gs(observe(pop, model));
  CHECK(gs[0] == gs[1]);
  const auto ohv = ohv_scores(observe(pop, model), model);
  CHECK(ohv[1] > ohv[0]);
  CHECK(select_top_k(ohv, 1) == std::vector<std::size_t>{1});
}

TEST_CASE("random scores") {
  RngStream a(4, 0), b(4, 0);
  CHECK(random_scores(10, a) == random_scores(10, b));
  RngStream c(5, 0);
  const auto one = random_scores(1, c);
  REQUIRE(one.size() == 1);
  CHECK(select_top_k(one, 1) == std::vector<std::size_t>{0});

  // selection frequency over 10^4 episodes
  const std::size_t n = 20, k = 5;
  const int episodes = 10000;
  std::vector<int> hits(n, 0);
  RngStream rng(6, 0);
  for (int e = 0; e < episodes; ++e) {
    for (auto i : select_top_k(random_scores(n, rng), k)) ++hits[i];
  }
  const double p = double(k) / n;
  const double sigma = std::sqrt(p * (1 - p) / episodes);
  for (int h : hits) CHECK(std::abs(h / double(episodes) - p) < 3.5 * sigma);
}

TEST_CASE("positive rescaling of scores keeps the selection") {
  RngStream rng(7, 0);
  const auto pop = testutil::random_population(30, 50, rng);
  const TraitModel model(testutil::random_weights(50, rng));
  auto s = standard_gs(observe(pop, model));
  const auto before = select_top_k(s, 8);
  for (double& x : s) x *= 3.7;
  CHECK(select_top_k(s, 8) == before);
}

}  // TEST_SUITE
