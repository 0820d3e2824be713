#include "breedrl/genome.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "breedrl/errors.hpp"

namespace breedrl {

namespace {

void require_match(std::size_t genome_loci, std::size_t model_loci, const char* what) {
  if (genome_loci != model_loci) {
    throw ConfigError(std::string(what) + ": genome has " + std::to_string(genome_loci) +
                      " loci but model has " + std::to_string(model_loci));
  }
}

}  // namespace

Genome::Genome(std::vector<std::uint8_t> alleles) : alleles_(std::move(alleles)) {
  if (alleles_.empty() || alleles_.size() % 2 != 0) {
    throw ConfigError("genome needs 2*m alleles with m >= 1");
  }
  for (auto a : alleles_) {
    if (a > 1) throw ConfigError("genome alleles must be 0 or 1");
  }
}

Genome::Genome(std::span<const std::uint8_t> copy0, std::span<const std::uint8_t> copy1) {
  if (copy0.size() != copy1.size() || copy0.empty()) {
    throw ConfigError("haplotypes must be nonempty and of equal length");
  }
  alleles_.resize(copy0.size() * 2);
  for (std::size_t i = 0; i < copy0.size(); ++i) {
    if (copy0[i] > 1 || copy1[i] > 1) throw ConfigError("genome alleles must be 0 or 1");
    alleles_[2 * i] = copy0[i];
    alleles_[2 * i + 1] = copy1[i];
  }
}

Genome Genome::zeros(std::size_t num_loci) {
  return Genome(std::vector<std::uint8_t>(2 * num_loci, 0));
}

Genome Genome::ones(std::size_t num_loci) {
  return Genome(std::vector<std::uint8_t>(2 * num_loci, 1));
}

std::vector<std::uint8_t> Genome::haplotype(std::size_t copy) const {
  std::vector<std::uint8_t> out(num_loci());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alleles_[2 * i + copy];
  return out;
}

bool Genome::is_homozygous() const noexcept {
  for (std::size_t i = 0; i < num_loci(); ++i) {
    if (alleles_[2 * i] != alleles_[2 * i + 1]) return false;
  }
  return true;
}

Population::Population(std::vector<Genome> members_in, std::size_t generation_in)
    : members(std::move(members_in)), generation(generation_in) {
  if (members.empty()) throw ConfigError("population must have at least one member");
  const std::size_t m = members.front().num_loci();
  for (const auto& g : members) {
    if (g.num_loci() != m) throw ConfigError("population members differ in number of loci");
  }
}

TraitModel::TraitModel(std::vector<double> w, std::string name, std::string unit)
    : weights(std::move(w)), trait_name(std::move(name)), trait_unit(std::move(unit)) {
  if (weights.empty()) throw ConfigError("trait model needs at least one weight");
  for (double x : weights) {
    if (!std::isfinite(x)) throw ConfigError("trait model weights must be finite");
  }
}

RecombinationMap::RecombinationMap(std::vector<double> switch_prob,
                                   std::vector<std::size_t> chromosome_starts)
    : switch_prob_(std::move(switch_prob)), chromosome_starts_(std::move(chromosome_starts)) {
  if (switch_prob_.empty()) throw ConfigError("recombination map needs at least one locus");
  if (chromosome_starts_.empty() || chromosome_starts_.front() != 0) {
    throw ConfigError("chromosome starts must begin with locus 0");
  }
  if (!std::is_sorted(chromosome_starts_.begin(), chromosome_starts_.end()) ||
      std::adjacent_find(chromosome_starts_.begin(), chromosome_starts_.end()) !=
          chromosome_starts_.end()) {
    throw ConfigError("chromosome starts must be strictly increasing");
  }
  if (chromosome_starts_.back() >= switch_prob_.size()) {
    throw ConfigError("chromosome start beyond the last locus");
  }
  for (double p : switch_prob_) {
    if (!(p >= 0.0 && p <= 0.5)) throw ConfigError("switch probabilities must lie in [0, 0.5]");
  }
  switch_prob_[0] = 0.0;
  for (std::size_t j : chromosome_starts_) {
    if (j > 0 && switch_prob_[j] != 0.5) {
      throw ConfigError("switch probability at chromosome start " + std::to_string(j) +
                        " must be 0.5");
    }
  }
}

RecombinationMap RecombinationMap::uniform(std::size_t num_loci, double switch_prob) {
  std::vector<double> p(num_loci, switch_prob);
  if (!p.empty()) p[0] = 0.0;
  return RecombinationMap(std::move(p), {0});
}

double estimate_trait(const Genome& genome, const TraitModel& model) {
  require_match(genome.num_loci(), model.num_loci(), "estimate_trait");
  const auto alleles = genome.data();
  double total = 0.0;
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    total += model.weights[i] * static_cast<double>(alleles[2 * i] + alleles[2 * i + 1]);
  }
  return total;
}

std::vector<double> estimate_traits(const Population& pop, const TraitModel& model) {
  std::vector<double> out;
  out.reserve(pop.size());
  for (const auto& g : pop.members) out.push_back(estimate_trait(g, model));
  return out;
}

std::vector<int> dosage(const Genome& genome) {
  std::vector<int> out(genome.num_loci());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = genome.allele(i, 0) + genome.allele(i, 1);
  return out;
}

double optimal_haploid_value(const Genome& genome, const TraitModel& model,
                             std::size_t block_size) {
  require_match(genome.num_loci(), model.num_loci(), "optimal_haploid_value");
  if (block_size == 0) throw ConfigError("OHV block size must be positive");
  const std::size_t m = genome.num_loci();
  double total = 0.0;
  for (std::size_t start = 0; start < m; start += block_size) {
    const std::size_t end = std::min(m, start + block_size);
    if (end - start == 1) {
      const double w = model.weights[start];
      total += std::max(w * genome.allele(start, 0), w * genome.allele(start, 1));
      continue;
    }
    double block0 = 0.0;
    double block1 = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      block0 += model.weights[i] * genome.allele(i, 0);
      block1 += model.weights[i] * genome.allele(i, 1);
    }
    total += std::max(block0, block1);
  }
  return 2.0 * total;
}

CorrelationResult genome_correlation(const Population& pop) {
  const std::size_t n = pop.size();
  if (n < 2) throw DomainError("genome correlation needs at least two plants");
  const std::size_t m = pop.num_loci();

  std::vector<double> mean_profile(m, 0.0);
  for (const auto& g : pop.members) {
    for (std::size_t j = 0; j < m; ++j) mean_profile[j] += g.allele(j, 0) + g.allele(j, 1);
  }
  for (double& x : mean_profile) x /= static_cast<double>(n);

  double profile_mean = 0.0;
  for (double x : mean_profile) profile_mean += x;
  profile_mean /= static_cast<double>(m);
  double profile_ss = 0.0;
  for (double x : mean_profile) profile_ss += (x - profile_mean) * (x - profile_mean);

  CorrelationResult result;
  result.values.assign(n, 0.0);
  result.zero_variance.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = pop.members[i];
    double plant_mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) plant_mean += g.allele(j, 0) + g.allele(j, 1);
    plant_mean /= static_cast<double>(m);
    double cross = 0.0;
    double plant_ss = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = (g.allele(j, 0) + g.allele(j, 1)) - plant_mean;
      cross += d * (mean_profile[j] - profile_mean);
      plant_ss += d * d;
    }
    if (plant_ss == 0.0 || profile_ss == 0.0) {
      result.zero_variance[i] = true;
      continue;
    }
    const double r = cross / (std::sqrt(plant_ss) * std::sqrt(profile_ss));
    result.values[i] = std::clamp(r, -1.0, 1.0);
  }
  return result;
}

double aggregate(std::span<const double> values, Aggregation kind) {
  if (values.empty()) throw DomainError("cannot aggregate an empty vector");
  if (kind == Aggregation::kMax) return *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

PlantTensor weighted_observation(const Population& pop, const TraitModel& model) {
  const std::size_t m = model.num_loci();
  if (pop.size() > 0) require_match(pop.num_loci(), m, "weighted_observation");
  PlantTensor out(pop.size(), m);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const auto alleles = pop.members[i].data();
    auto row = out.plant(i);
    for (std::size_t k = 0; k < 2 * m; ++k) {
      row[k] = model.weights[k / 2] * static_cast<double>(alleles[k]);
    }
  }
  return out;
}

double weighted_row_sum(std::span<const double> plant_slice) {
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < plant_slice.size(); k += 2) {
    total += plant_slice[k] + plant_slice[k + 1];
  }
  return total;
}

double population_stddev(std::span<const double> values) {
  if (values.empty()) throw DomainError("standard deviation of an empty vector");
  const double mean = aggregate(values, Aggregation::kMean);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

}  // namespace breedrl
