#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <vector>

#include "breedrl/data_io.hpp"
#include "breedrl/genome.hpp"
#include "breedrl/rng.hpp"

namespace testutil {

inline breedrl::Genome random_genome(std::size_t m, breedrl::RngStream& rng) {
  std::vector<std::uint8_t> a(2 * m);
  for (auto& x : a) x = rng.bit() ? 1 : 0;
  return breedrl::Genome(std::move(a));
}

inline breedrl::Population random_population(std::size_t n, std::size_t m,
                                             breedrl::RngStream& rng) {
  std::vector<breedrl::Genome> members;
  for (std::size_t i = 0; i < n; ++i) members.push_back(random_genome(m, rng));
  return breedrl::Population(std::move(members), 0);
}

inline std::vector<double> random_weights(std::size_t m, breedrl::RngStream& rng) {
  std::vector<double> w(m);
  for (double& x : w) x = rng.normal();
  return w;
}

inline std::shared_ptr<const breedrl::FounderDataset> small_dataset(std::size_t founders,
                                                                    std::size_t loci,
                                                                    std::size_t chromosomes,
                                                                    std::uint64_t seed) {
  breedrl::SyntheticSpec spec;
  spec.num_founders = founders;
  spec.num_loci = loci;
  spec.num_chromosomes = chromosomes;
  spec.seed = seed;
  return std::make_shared<const breedrl::FounderDataset>(breedrl::synthesize_founders(spec));
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("breedrl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testutil
