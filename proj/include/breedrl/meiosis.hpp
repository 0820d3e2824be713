#pragma once

// Gamete formation and crossing: the stochastic transition kernel of the
// breeding process.
//
// Recombination is a first-order Markov walk over the copying phase: the
// phase is drawn uniformly at every chromosome start and flips before locus i
// with probability switch_prob[i]. A gamete always consumes one uniform per
// locus plus one bit per chromosome, so draw positions never depend on the
// genotype or the map values.

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "breedrl/genome.hpp"
#include "breedrl/rng.hpp"

namespace breedrl {

struct CrossPlan {
  // (first parent, second parent); the offspring's copy 0 comes from the first.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  [[nodiscard]] std::size_t size() const noexcept { return pairs.size(); }
};

std::vector<std::uint8_t> gamete(const Genome& parent, const RecombinationMap& map,
                                 RngStream& rng);

Genome cross(const Genome& parent_a, const Genome& parent_b, const RecombinationMap& map,
             RngStream& rng);

// Offspring j is cross(plan.pairs[j]) drawn from rng.fork(j), so the result is
// independent of `workers` (0 selects the hardware concurrency).
Population cross_batch(const Population& pop, const CrossPlan& plan, const RecombinationMap& map,
                       const RngStream& rng, unsigned workers = 1);

// Throws ActionError naming the first pair with an index outside [0, n).
void validate_plan(const CrossPlan& plan, std::size_t population_size);

}  // namespace breedrl
