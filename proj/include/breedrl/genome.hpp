#pragma once

// Diploid SNP genomes, populations, the additive trait model and the
// deterministic genetic arithmetic built on them.
//
// Every reduction over loci runs in ascending locus order so results are
// bitwise reproducible across runs and thread schedules.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace breedrl {

// Boolean (m, 2) allele matrix stored locus-major: alleles[2*i + c].
class Genome {
 public:
  Genome() = default;
  // Flat locus-major allele array of length 2*m with values in {0, 1}.
  explicit Genome(std::vector<std::uint8_t> alleles);
  // Two haplotypes of equal length.
  Genome(std::span<const std::uint8_t> copy0, std::span<const std::uint8_t> copy1);

  static Genome zeros(std::size_t num_loci);
  static Genome ones(std::size_t num_loci);

  [[nodiscard]] std::size_t num_loci() const noexcept { return alleles_.size() / 2; }
  [[nodiscard]] std::uint8_t allele(std::size_t locus, std::size_t copy) const noexcept {
    return alleles_[2 * locus + copy];
  }
  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return alleles_; }
  [[nodiscard]] std::vector<std::uint8_t> haplotype(std::size_t copy) const;
  [[nodiscard]] bool is_homozygous() const noexcept;

  friend bool operator==(const Genome&, const Genome&) = default;

 private:
  std::vector<std::uint8_t> alleles_;
};

struct Population {
  std::vector<Genome> members;
  std::size_t generation = 0;

  Population() = default;
  Population(std::vector<Genome> members, std::size_t generation);

  [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
  [[nodiscard]] std::size_t num_loci() const noexcept {
    return members.empty() ? 0 : members.front().num_loci();
  }
  const Genome& operator[](std::size_t i) const { return members[i]; }

  friend bool operator==(const Population&, const Population&) = default;
};

struct TraitModel {
  std::vector<double> weights;  // trait units per alternate-allele copy
  std::string trait_name = "trait";
  std::string trait_unit;

  TraitModel() = default;
  explicit TraitModel(std::vector<double> weights, std::string name = "trait",
                      std::string unit = {});

  [[nodiscard]] std::size_t num_loci() const noexcept { return weights.size(); }

  friend bool operator==(const TraitModel&, const TraitModel&) = default;
};

// Per-interval phase-switch probabilities. switch_prob[0] is unused and held
// at 0; switch_prob[j] == 0.5 at every chromosome start j > 0.
class RecombinationMap {
 public:
  RecombinationMap() = default;
  RecombinationMap(std::vector<double> switch_prob, std::vector<std::size_t> chromosome_starts);

  // Single chromosome with constant switch probability between adjacent loci.
  static RecombinationMap uniform(std::size_t num_loci, double switch_prob);

  [[nodiscard]] std::size_t num_loci() const noexcept { return switch_prob_.size(); }
  [[nodiscard]] std::span<const double> switch_prob() const noexcept { return switch_prob_; }
  [[nodiscard]] std::span<const std::size_t> chromosome_starts() const noexcept {
    return chromosome_starts_;
  }
  [[nodiscard]] std::size_t num_chromosomes() const noexcept { return chromosome_starts_.size(); }

  friend bool operator==(const RecombinationMap&, const RecombinationMap&) = default;

 private:
  std::vector<double> switch_prob_;
  std::vector<std::size_t> chromosome_starts_;
};

// Dense (n, m, 2) real tensor, row-major.
class PlantTensor {
 public:
  PlantTensor() = default;
  PlantTensor(std::size_t plants, std::size_t loci)
      : plants_(plants), loci_(loci), data_(plants * loci * 2, 0.0) {}

  [[nodiscard]] std::size_t plants() const noexcept { return plants_; }
  [[nodiscard]] std::size_t loci() const noexcept { return loci_; }
  double& at(std::size_t plant, std::size_t locus, std::size_t copy) {
    return data_[(plant * loci_ + locus) * 2 + copy];
  }
  [[nodiscard]] double at(std::size_t plant, std::size_t locus, std::size_t copy) const {
    return data_[(plant * loci_ + locus) * 2 + copy];
  }
  // The (m, 2) slice of one plant, locus-major.
  [[nodiscard]] std::span<const double> plant(std::size_t i) const {
    return {data_.data() + i * loci_ * 2, loci_ * 2};
  }
  std::span<double> plant(std::size_t i) { return {data_.data() + i * loci_ * 2, loci_ * 2}; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  friend bool operator==(const PlantTensor&, const PlantTensor&) = default;

 private:
  std::size_t plants_ = 0;
  std::size_t loci_ = 0;
  std::vector<double> data_;
};

enum class Aggregation { kMax, kMean };

struct CorrelationResult {
  std::vector<double> values;
  // True where the plant's dosage profile (or the mean profile) was constant
  // and the correlation was defined as 0.
  std::vector<bool> zero_variance;
};

double estimate_trait(const Genome& genome, const TraitModel& model);
std::vector<double> estimate_traits(const Population& pop, const TraitModel& model);

std::vector<int> dosage(const Genome& genome);

// Trait of the best doubled haploid assembled from haplotype blocks of
// `block_size` loci: each block contributes the better of its two copies.
double optimal_haploid_value(const Genome& genome, const TraitModel& model,
                             std::size_t block_size = 1);

// Pearson correlation of each plant's dosage vector with the population-mean
// dosage profile.
CorrelationResult genome_correlation(const Population& pop);

double aggregate(std::span<const double> values, Aggregation kind);

// Element (i, j, c) = w_j * alleles_i[j][c].
PlantTensor weighted_observation(const Population& pop, const TraitModel& model);

// Sum of one plant's weighted slice, pairing the two copies per locus and
// accumulating loci in ascending order; equals estimate_trait bitwise.
double weighted_row_sum(std::span<const double> plant_slice);

// Population standard deviation (divisor n).
double population_stddev(std::span<const double> values);

}  // namespace breedrl
