#pragma once

// Founder datasets: on-disk formats, marker subsetting, synthetic generation
// and per-generation episode logs. File layouts are documented in
// docs/file_formats.md.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "breedrl/genome.hpp"
#include "breedrl/rng.hpp"

namespace breedrl {

struct FounderDataset {
  std::vector<Genome> genotypes;
  TraitModel model;
  RecombinationMap map;
  std::vector<std::string> marker_names;
  std::vector<std::string> chromosomes;  // chromosome label per marker
  std::vector<double> positions_cm;      // map position per marker

  [[nodiscard]] std::size_t num_loci() const noexcept { return model.num_loci(); }
  [[nodiscard]] std::size_t num_founders() const noexcept { return genotypes.size(); }

  // Throws ConfigError if sizes disagree or the pool is empty.
  void validate() const;

  friend bool operator==(const FounderDataset&, const FounderDataset&) = default;
};

// Haldane map function: recombination fraction for a distance in centimorgans.
double haldane(double distance_cm);

// Switch probabilities from per-marker chromosome labels and positions;
// 0.5 at every chromosome boundary. Markers of one chromosome must be
// contiguous and sorted by position.
RecombinationMap map_from_positions(std::span<const std::string> chromosomes,
                                    std::span<const double> positions_cm);

FounderDataset load_dataset(const std::filesystem::path& genotype_path,
                            const std::filesystem::path& marker_path);
void save_dataset(const FounderDataset& dataset, const std::filesystem::path& genotype_path,
                  const std::filesystem::path& marker_path);

// Uniform marker subset without replacement; locus order is preserved and the
// map is recomputed from the surviving positions.
FounderDataset subset_markers(const FounderDataset& dataset, std::size_t target_loci,
                              RngStream rng);

struct SyntheticSpec {
  std::size_t num_founders = 400;
  std::size_t num_loci = 1000;
  std::size_t num_chromosomes = 10;
  std::uint64_t seed = 0;
  double allele_freq_spread = 1.0;  // symmetric Beta shape
  double effect_scale = 1.0;        // Gaussian effect standard deviation
};

FounderDataset synthesize_founders(const SyntheticSpec& spec);

struct GenerationRecord {
  std::uint64_t seed = 0;
  std::size_t generation = 0;
  double best_trait = 0.0;
  double mean_trait = 0.0;
  double trait_std = 0.0;
  double mean_genome_correlation = 0.0;  // NaN for single-plant populations

  friend bool operator==(const GenerationRecord&, const GenerationRecord&) = default;
};

inline constexpr const char* kEpisodeLogHeader =
    "seed,generation,best_trait,mean_trait,trait_std,mean_genome_correlation";

GenerationRecord make_generation_record(std::uint64_t seed, const Population& pop,
                                        const TraitModel& model);

void log_episode(const std::filesystem::path& path, std::span<const GenerationRecord> records);
std::vector<GenerationRecord> read_episode_log(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace breedrl
