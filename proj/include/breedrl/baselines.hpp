#pragma once

// Reference selection policies. All of them emit one score per plant through
// the SelectionScores action interface, so comparisons against a learned
// policy share identical environment randomness.

#include <memory>
#include <string>
#include <vector>

#include "breedrl/envs.hpp"
#include "breedrl/genome.hpp"
#include "breedrl/rng.hpp"

namespace breedrl {

// Score_i = estimated trait of plant i, recovered from the weighted observation.
std::vector<double> standard_gs(const WeightedObservation& obs);

// Score_i = optimal haploid value of plant i (single-locus blocks).
std::vector<double> ohv_scores(const WeightedObservation& obs, const TraitModel& model);

// i.i.d. uniform scores in [0, 1).
std::vector<double> random_scores(std::size_t n, RngStream& rng);

class ScorePolicy {
 public:
  virtual ~ScorePolicy() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  // `rng` is a per-step stream owned by the caller; deterministic policies ignore it.
  [[nodiscard]] virtual std::vector<double> act(const WeightedObservation& obs,
                                                RngStream& rng) const = 0;
};

class StandardGsPolicy final : public ScorePolicy {
 public:
  [[nodiscard]] std::string name() const override { return "standard-gs"; }
  [[nodiscard]] std::vector<double> act(const WeightedObservation& obs,
                                        RngStream&) const override {
    return standard_gs(obs);
  }
};

class OhvPolicy final : public ScorePolicy {
 public:
  explicit OhvPolicy(TraitModel model) : model_(std::move(model)) {}
  [[nodiscard]] std::string name() const override { return "ohv"; }
  [[nodiscard]] std::vector<double> act(const WeightedObservation& obs,
                                        RngStream&) const override {
    return ohv_scores(obs, model_);
  }

 private:
  TraitModel model_;
};

class RandomPolicy final : public ScorePolicy {
 public:
  [[nodiscard]] std::string name() const override { return "random"; }
  [[nodiscard]] std::vector<double> act(const WeightedObservation& obs,
                                        RngStream& rng) const override {
    return random_scores(obs.genomes.plants(), rng);
  }
};

}  // namespace breedrl
