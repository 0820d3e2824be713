#include "breedrl/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "breedrl/errors.hpp"

namespace breedrl {

namespace {

constexpr std::string_view kMarkerHeader = "name,chrom,pos_cM,weight";

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  }
  return value;
}

void FounderDataset::validate() const {
  const std::size_t m = model.num_loci();
  if (genotypes.empty()) throw ConfigError("founder pool is empty");
  if (m == 0) throw ConfigError("dataset has no markers");
  if (map.num_loci() != m || marker_names.size() != m || chromosomes.size() != m ||
      positions_cm.size() != m) {
    throw ConfigError("dataset marker tables disagree in length");
  }
  for (const auto& g : genotypes) {
    if (g.num_loci() != m) throw ConfigError("founder genotype length differs from marker count");
  }
}

double haldane(double distance_cm) { return 0.5 * (1.0 - std::exp(-2.0 * distance_cm / 100.0)); }

RecombinationMap map_from_positions(std::span<const std::string> chromosomes,
                                    std::span<const double> positions_cm) {
  if (chromosomes.size() != positions_cm.size() || chromosomes.empty()) {
    throw ConfigError("chromosome and position tables must be nonempty and equal length");
  }
  std::vector<double> switch_prob(chromosomes.size(), 0.0);
  std::vector<std::size_t> starts{0};
  std::unordered_set<std::string> seen{chromosomes[0]};
  for (std::size_t i = 1; i < chromosomes.size(); ++i) {
    if (chromosomes[i] != chromosomes[i - 1]) {
      if (!seen.insert(chromosomes[i]).second) {
        throw ConfigError("markers of chromosome '" + chromosomes[i] + "' are not contiguous");
      }
      starts.push_back(i);
      switch_prob[i] = 0.5;
      continue;
    }
    const double d = positions_cm[i] - positions_cm[i - 1];
    if (!(d >= 0.0)) throw ConfigError("marker positions unsorted within a chromosome");
    switch_prob[i] = haldane(d);
  }
  return RecombinationMap(std::move(switch_prob), std::move(starts));
}

FounderDataset load_dataset(const std::filesystem::path& genotype_path,
                            const std::filesystem::path& marker_path) {
  FounderDataset ds;
  std::vector<double> weights;

  {
    std::ifstream in(marker_path);
    if (!in) throw ParseError(marker_path.string(), 0, "cannot open marker file");
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::unordered_set<std::string> names;
    std::unordered_set<std::string> finished_chromosomes;
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = trim(line);
      if (body.empty()) continue;
      if (!header_seen) {
        if (body != kMarkerHeader) {
          throw ParseError(marker_path.string(), line_no,
                           "expected header '" + std::string(kMarkerHeader) + "'");
        }
        header_seen = true;
        continue;
      }
      const auto fields = split_csv(body);
      if (fields.size() != 4) {
        throw ParseError(marker_path.string(), line_no, "expected 4 comma-separated fields");
      }
      std::string name(fields[0]);
      std::string chrom(fields[1]);
      if (name.empty() || chrom.empty()) {
        throw ParseError(marker_path.string(), line_no, "empty marker name or chromosome");
      }
      double pos = 0.0;
      double weight = 0.0;
      try {
        pos = parse_double(fields[2]);
        weight = parse_double(fields[3]);
      } catch (const std::invalid_argument& e) {
        throw ParseError(marker_path.string(), line_no, e.what());
      }
      if (!std::isfinite(pos) || !std::isfinite(weight)) {
        throw ParseError(marker_path.string(), line_no, "position and weight must be finite");
      }
      if (!names.insert(name).second) {
        throw ParseError(marker_path.string(), line_no, "duplicate marker name '" + name + "'");
      }
      if (!ds.chromosomes.empty() && ds.chromosomes.back() == chrom) {
        if (pos < ds.positions_cm.back()) {
          throw ParseError(marker_path.string(), line_no,
                           "position " + std::string(fields[2]) + " unsorted within chromosome '" +
                               chrom + "'");
        }
      } else {
        if (!ds.chromosomes.empty()) finished_chromosomes.insert(ds.chromosomes.back());
        if (finished_chromosomes.count(chrom) != 0) {
          throw ParseError(marker_path.string(), line_no,
                           "markers of chromosome '" + chrom + "' are not contiguous");
        }
      }
      ds.marker_names.push_back(std::move(name));
      ds.chromosomes.push_back(std::move(chrom));
      ds.positions_cm.push_back(pos);
      weights.push_back(weight);
    }
    if (!header_seen) throw ParseError(marker_path.string(), 0, "missing header");
    if (weights.empty()) throw ParseError(marker_path.string(), 0, "no markers");
  }

  const std::size_t m = weights.size();
  {
    std::ifstream in(genotype_path);
    if (!in) throw ParseError(genotype_path.string(), 0, "cannot open genotype file");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      std::istringstream tokens(line);
      std::vector<std::uint8_t> alleles;
      alleles.reserve(2 * m);
      std::string token;
      while (tokens >> token) {
        if (token.size() != 2 || (token[0] != '0' && token[0] != '1') ||
            (token[1] != '0' && token[1] != '1')) {
          throw ParseError(genotype_path.string(), line_no,
                           "non-binary diplotype token '" + token + "'");
        }
        alleles.push_back(static_cast<std::uint8_t>(token[0] - '0'));
        alleles.push_back(static_cast<std::uint8_t>(token[1] - '0'));
      }
      if (alleles.size() != 2 * m) {
        throw ParseError(genotype_path.string(), line_no,
                         "expected " + std::to_string(m) + " diplotypes, found " +
                             std::to_string(alleles.size() / 2));
      }
      ds.genotypes.emplace_back(std::move(alleles));
    }
    if (ds.genotypes.empty()) throw ParseError(genotype_path.string(), 0, "no individuals");
  }

  ds.model = TraitModel(std::move(weights));
  ds.map = map_from_positions(ds.chromosomes, ds.positions_cm);
  ds.validate();
  return ds;
}

void save_dataset(const FounderDataset& dataset, const std::filesystem::path& genotype_path,
                  const std::filesystem::path& marker_path) {
  dataset.validate();
  {
    auto out = open_for_write(marker_path);
    out << kMarkerHeader << '\n';
    for (std::size_t i = 0; i < dataset.num_loci(); ++i) {
      out << dataset.marker_names[i] << ',' << dataset.chromosomes[i] << ','
          << format_double(dataset.positions_cm[i]) << ','
          << format_double(dataset.model.weights[i]) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + marker_path.string());
  }
  {
    auto out = open_for_write(genotype_path);
    std::string row;
    for (const auto& g : dataset.genotypes) {
      row.clear();
      for (std::size_t i = 0; i < g.num_loci(); ++i) {
        if (i > 0) row.push_back(' ');
        row.push_back(static_cast<char>('0' + g.allele(i, 0)));
        row.push_back(static_cast<char>('0' + g.allele(i, 1)));
      }
      out << row << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + genotype_path.string());
  }
}

FounderDataset subset_markers(const FounderDataset& dataset, std::size_t target_loci,
                              RngStream rng) {
  const std::size_t m = dataset.num_loci();
  if (target_loci > m) {
    throw ConfigError("cannot subset " + std::to_string(target_loci) + " markers from " +
                      std::to_string(m));
  }
  if (target_loci == 0) throw ConfigError("marker subset must be nonempty");

  std::vector<std::size_t> index(m);
  std::iota(index.begin(), index.end(), std::size_t{0});
  for (std::size_t i = 0; i < target_loci; ++i) {
    const std::size_t j = i + rng.below(m - i);
    std::swap(index[i], index[j]);
  }
  index.resize(target_loci);
  std::sort(index.begin(), index.end());

  FounderDataset out;
  std::vector<double> weights;
  for (std::size_t i : index) {
    weights.push_back(dataset.model.weights[i]);
    out.marker_names.push_back(dataset.marker_names[i]);
    out.chromosomes.push_back(dataset.chromosomes[i]);
    out.positions_cm.push_back(dataset.positions_cm[i]);
  }
  for (const auto& g : dataset.genotypes) {
    std::vector<std::uint8_t> alleles;
    alleles.reserve(2 * target_loci);
    for (std::size_t i : index) {
      alleles.push_back(g.allele(i, 0));
      alleles.push_back(g.allele(i, 1));
    }
    out.genotypes.emplace_back(std::move(alleles));
  }
  out.model = TraitModel(std::move(weights), dataset.model.trait_name, dataset.model.trait_unit);
  out.map = map_from_positions(out.chromosomes, out.positions_cm);
  return out;
}

FounderDataset synthesize_founders(const SyntheticSpec& spec) {
  if (spec.num_founders == 0 || spec.num_loci == 0 || spec.num_chromosomes == 0) {
    throw ConfigError("synthetic dataset sizes must be positive");
  }
  if (spec.num_chromosomes > spec.num_loci) {
    throw ConfigError("more chromosomes than markers");
  }
  if (!(spec.allele_freq_spread > 0.0) || !(spec.effect_scale >= 0.0)) {
    throw ConfigError("allele_freq_spread must be positive and effect_scale nonnegative");
  }
  const std::size_t m = spec.num_loci;
  const RngStream root(spec.seed, 0x5EED'F0DE'0000'0001ULL);

  FounderDataset ds;
  ds.marker_names.reserve(m);
  ds.chromosomes.reserve(m);
  ds.positions_cm.reserve(m);

  RngStream position_rng = root.fork(3);
  const std::size_t per_chrom = m / spec.num_chromosomes;
  const std::size_t extra = m % spec.num_chromosomes;
  for (std::size_t c = 0; c < spec.num_chromosomes; ++c) {
    const std::size_t count = per_chrom + (c < extra ? 1 : 0);
    std::vector<double> pos(count);
    for (double& p : pos) p = 100.0 * position_rng.uniform();
    std::sort(pos.begin(), pos.end());
    for (double p : pos) {
      ds.marker_names.push_back("snp" + std::to_string(ds.marker_names.size()));
      ds.chromosomes.push_back(std::to_string(c + 1));
      ds.positions_cm.push_back(p);
    }
  }

  RngStream freq_rng = root.fork(0);
  std::vector<double> freq(m);
  for (double& p : freq) p = freq_rng.beta(spec.allele_freq_spread, spec.allele_freq_spread);

  ds.genotypes.reserve(spec.num_founders);
  for (std::size_t f = 0; f < spec.num_founders; ++f) {
    RngStream geno_rng = root.fork(1).fork(f);
    std::vector<std::uint8_t> alleles(2 * m);
    for (std::size_t k = 0; k < 2 * m; ++k) {
      alleles[k] = geno_rng.uniform() < freq[k / 2] ? 1 : 0;
    }
    ds.genotypes.emplace_back(std::move(alleles));
  }

  RngStream effect_rng = root.fork(2);
  std::vector<double> weights(m);
  for (double& w : weights) w = spec.effect_scale * effect_rng.normal();
  ds.model = TraitModel(std::move(weights));
  ds.map = map_from_positions(ds.chromosomes, ds.positions_cm);
  return ds;
}

GenerationRecord make_generation_record(std::uint64_t seed, const Population& pop,
                                        const TraitModel& model) {
  const auto traits = estimate_traits(pop, model);
  GenerationRecord rec;
  rec.seed = seed;
  rec.generation = pop.generation;
  rec.best_trait = aggregate(traits, Aggregation::kMax);
  rec.mean_trait = aggregate(traits, Aggregation::kMean);
  rec.trait_std = population_stddev(traits);
  if (pop.size() >= 2) {
    const auto corr = genome_correlation(pop);
    rec.mean_genome_correlation = aggregate(corr.values, Aggregation::kMean);
  } else {
    rec.mean_genome_correlation = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

void log_episode(const std::filesystem::path& path, std::span<const GenerationRecord> records) {
  auto out = open_for_write(path);
  out << kEpisodeLogHeader << '\n';
  for (const auto& r : records) {
    out << r.seed << ',' << r.generation << ',' << format_double(r.best_trait) << ','
        << format_double(r.mean_trait) << ',' << format_double(r.trait_std) << ','
        << format_double(r.mean_genome_correlation) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<GenerationRecord> read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open episode log");
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || trim(line) != kEpisodeLogHeader) {
    throw ParseError(path.string(), 1, "unexpected episode log header");
  }
  std::vector<GenerationRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 6) throw ParseError(path.string(), line_no, "expected 6 fields");
    try {
      GenerationRecord r;
      r.seed = std::stoull(std::string(f[0]));
      r.generation = std::stoull(std::string(f[1]));
      r.best_trait = parse_double(f[2]);
      r.mean_trait = parse_double(f[3]);
      r.trait_std = parse_double(f[4]);
      r.mean_genome_correlation = parse_double(f[5]);
      records.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
  return records;
}

}  // namespace breedrl
