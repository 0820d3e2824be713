#include "breedrl/meiosis.hpp"

#include <string>

#include "breedrl/errors.hpp"
#include "breedrl/parallel.hpp"

namespace breedrl {

std::vector<std::uint8_t> gamete(const Genome& parent, const RecombinationMap& map,
                                 RngStream& rng) {
  const std::size_t m = parent.num_loci();
  if (map.num_loci() != m) {
    throw ConfigError("gamete: genome has " + std::to_string(m) + " loci but map has " +
                      std::to_string(map.num_loci()));
  }
  const auto p = map.switch_prob();
  const auto starts = map.chromosome_starts();
  const auto alleles = parent.data();

  std::vector<std::uint8_t> out(m);
  std::size_t next_start = 0;
  unsigned phase = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform();
    if (next_start < starts.size() && starts[next_start] == i) {
      phase = rng.bit() ? 1U : 0U;
      ++next_start;
    } else if (u < p[i]) {
      phase ^= 1U;
    }
    out[i] = alleles[2 * i + phase];
  }
  return out;
}

Genome cross(const Genome& parent_a, const Genome& parent_b, const RecombinationMap& map,
             RngStream& rng) {
  if (parent_a.num_loci() != parent_b.num_loci()) {
    throw ConfigError("cross: parents differ in number of loci");
  }
  const auto from_a = gamete(parent_a, map, rng);
  const auto from_b = gamete(parent_b, map, rng);
  return Genome(from_a, from_b);
}

void validate_plan(const CrossPlan& plan, std::size_t population_size) {
  if (plan.pairs.empty()) throw ActionError("cross plan must contain at least one pair");
  for (std::size_t j = 0; j < plan.pairs.size(); ++j) {
    const auto [a, b] = plan.pairs[j];
    if (a >= population_size || b >= population_size) {
      throw ActionError("cross plan pair " + std::to_string(j) + " (" + std::to_string(a) + ", " +
                        std::to_string(b) + ") out of range for population of size " +
                        std::to_string(population_size));
    }
  }
}

Population cross_batch(const Population& pop, const CrossPlan& plan, const RecombinationMap& map,
                       const RngStream& rng, unsigned workers) {
  validate_plan(plan, pop.size());
  if (map.num_loci() != pop.num_loci()) {
    throw ConfigError("cross_batch: population and map differ in number of loci");
  }
  std::vector<Genome> offspring(plan.size());
  parallel_for(plan.size(), workers, [&](std::size_t j) {
    RngStream pair_rng = rng.fork(j);
    const auto [a, b] = plan.pairs[j];
    offspring[j] = cross(pop.members[a], pop.members[b], map, pair_rng);
  });
  return Population(std::move(offspring), pop.generation + 1);
}

}  // namespace breedrl
