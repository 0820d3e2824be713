#include "breedrl/baselines.hpp"

#include <algorithm>
#include <string>

#include "breedrl/errors.hpp"

namespace breedrl {

std::vector<double> standard_gs(const WeightedObservation& obs) {
  const auto& g = obs.genomes;
  if (g.plants() == 0 || g.loci() == 0) throw ActionError("standard_gs: empty observation");
  std::vector<double> scores(g.plants());
  for (std::size_t i = 0; i < g.plants(); ++i) scores[i] = weighted_row_sum(g.plant(i));
  return scores;
}

std::vector<double> ohv_scores(const WeightedObservation& obs, const TraitModel& model) {
  const auto& g = obs.genomes;
  if (g.loci() != model.num_loci()) {
    throw ConfigError("ohv: observation has " + std::to_string(g.loci()) +
                      " loci but model has " + std::to_string(model.num_loci()));
  }
  std::vector<double> scores(g.plants());
  for (std::size_t i = 0; i < g.plants(); ++i) {
    const auto row = g.plant(i);
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < row.size(); k += 2) total += std::max(row[k], row[k + 1]);
    scores[i] = 2.0 * total;
  }
  return scores;
}

std::vector<double> random_scores(std::size_t n, RngStream& rng) {
  std::vector<double> scores(n);
  for (double& s : scores) s = rng.uniform();
  return scores;
}

}  // namespace breedrl
