#include <doctest.h>

#include <cmath>
#include <vector>

#include "breedrl/errors.hpp"
#include "breedrl/meiosis.hpp"
#include "helpers.hpp"

using namespace breedrl;

TEST_SUITE("meiosis") {

TEST_CASE("homozygous parent gives its own haplotype") {
  RngStream rng(1, 0);
  const auto h = testutil::random_genome(50, rng).haplotype(1);
  const Genome parent(h, h);
  const auto map = RecombinationMap::uniform(50, 0.3);
  for (int i = 0; i < 20; ++i) CHECK(gamete(parent, map, rng) == h);
}

TEST_CASE("no crossover keeps one intact parental copy") {
  RngStream rng(2, 0);
  const auto parent = testutil::random_genome(40, rng);
  const auto map = RecombinationMap::uniform(40, 0.0);
  int first = 0;
  for (int i = 0; i < 400; ++i) {
    const auto g = gamete(parent, map, rng);
    const bool is0 = g == parent.haplotype(0);
    const bool is1 = g == parent.haplotype(1);
    REQUIRE((is0 || is1));
    first += is0 ? 1 : 0;
  }
  CHECK(first > 140);
  CHECK(first < 260);
}

TEST_CASE("a heterozygous locus transmits each allele half the time") {
  const Genome parent(std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0});
  const auto map = RecombinationMap::uniform(3, 0.2);
  RngStream rng(3, 0);
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += gamete(parent, map, rng)[1];
  CHECK(std::abs(ones / double(n) - 0.5) < 0.005);
}

TEST_CASE("phase switches between adjacent loci follow the map") {
  // repulsion phase: copy 0 = (1, 0), copy 1 = (0, 1)
  const Genome parent(std::vector<std::uint8_t>{1, 0, 0, 1});
  const auto map = RecombinationMap::uniform(2, 0.1);
  RngStream rng(4, 0);
  const int n = 100000;
  int switches = 0;
  for (int i = 0; i < n; ++i) {
    const auto g = gamete(parent, map, rng);
    switches += g[0] == g[1] ? 1 : 0;  // same allele means the copy changed
  }
  CHECK(std::abs(switches / double(n) - 0.1) < 0.003);
}

TEST_CASE("draw count does not depend on the genotype or map values") {
  RngStream a(5, 0), b(5, 0);
  const auto map_a = RecombinationMap::uniform(30, 0.0);
  const auto map_b = RecombinationMap::uniform(30, 0.4);
  (void)gamete(Genome::zeros(30), map_a, a);
  RngStream rng(6, 0);
  (void)gamete(testutil::random_genome(30, rng), map_b, b);
  CHECK(a.position() == b.position());
  CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("cross examples") {
  RngStream rng(7, 0);
  const auto h = testutil::random_genome(25, rng).haplotype(0);
  const Genome homo(h, h);
  const auto map = RecombinationMap::uniform(25, 0.2);
  CHECK(cross(homo, homo, map, rng) == homo);

  const Genome child = cross(Genome::ones(25), Genome::zeros(25), map, rng);
  CHECK(child.haplotype(0) == std::vector<std::uint8_t>(25, 1));
  CHECK(child.haplotype(1) == std::vector<std::uint8_t>(25, 0));
}

TEST_CASE("cross_batch sizes and generation counter") {
  RngStream rng(8, 0);
  const auto pop = testutil::random_population(4, 20, rng);
  const auto map = RecombinationMap::uniform(20, 0.1);
  const auto one = cross_batch(pop, CrossPlan{{{2, 3}}}, map, RngStream(1, 1));
  CHECK(one.size() == 1);
  CHECK(one.generation == pop.generation + 1);

  const Genome homo = Genome::ones(20);
  const Population p2({homo, pop[1]}, 3);
  const auto selfs = cross_batch(p2, CrossPlan{std::vector<std::pair<std::size_t, std::size_t>>(5, {0, 0})},
                                 map, RngStream(2, 2));
  CHECK(selfs.size() == 5);
  for (const auto& g : selfs.members) CHECK(g == homo);
}

TEST_CASE("cross_batch is identical for any worker count") {
  RngStream rng(9, 0);
  const auto pop = testutil::random_population(30, 200, rng);
  const auto map = RecombinationMap::uniform(200, 0.05);
  CrossPlan plan;
  for (int j = 0; j < 60; ++j) plan.pairs.emplace_back(rng.below(30), rng.below(30));
  const RngStream stream(77, 3);
  const auto serial = cross_batch(pop, plan, map, stream, 1);
  for (unsigned w : {2U, 3U, 8U, 0U}) CHECK(cross_batch(pop, plan, map, stream, w) == serial);
}

TEST_CASE("invalid plans are rejected") {
  RngStream rng(10, 0);
  const auto pop = testutil::random_population(3, 10, rng);
  const auto map = RecombinationMap::uniform(10, 0.1);
  CHECK_THROWS_AS(cross_batch(pop, CrossPlan{{{0, 3}}}, map, rng), ActionError);
  CHECK_THROWS_AS(validate_plan(CrossPlan{}, 3), ActionError);
  CHECK_NOTHROW(validate_plan(CrossPlan{{{0, 2}}}, 3));
}

TEST_CASE("map and genome length must agree") {
  RngStream rng(11, 0);
  CHECK_THROWS_AS(gamete(Genome::zeros(5), RecombinationMap::uniform(6, 0.1), rng), ConfigError);
}

}  // TEST_SUITE
