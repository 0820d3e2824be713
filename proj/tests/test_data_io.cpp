#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "breedrl/data_io.hpp"
#include "breedrl/errors.hpp"
#include "helpers.hpp"

using namespace breedrl;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::size_t parse_error_line(const std::filesystem::path& g, const std::filesystem::path& m) {
  try {
    (void)load_dataset(g, m);
  } catch (const ParseError& e) {
    return e.line();
  }
  return std::numeric_limits<std::size_t>::max();
}

}  // namespace

TEST_SUITE("data_io") {

TEST_CASE("haldane map") {
  CHECK(haldane(0.0) == 0.0);
  CHECK(haldane(10.0) == doctest::Approx(0.5 * (1.0 - std::exp(-0.2))).epsilon(1e-15));
  CHECK(haldane(10.0) == doctest::Approx(0.0906).epsilon(1e-3));
  for (double d = 0.0; d <= 500.0; d += 0.37) {
    const double r = haldane(d);
    REQUIRE(r >= 0.0);
    REQUIRE(r < 0.5);
  }
}

TEST_CASE("map from positions") {
  const std::vector<std::string> chroms{"1", "1", "1", "2", "2"};
  const std::vector<double> pos{0.0, 0.0, 10.0, 5.0, 7.0};
  const auto map = map_from_positions(chroms, pos);
  const auto p = map.switch_prob();
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == doctest::Approx(0.5 * (1.0 - std::exp(-0.2))).epsilon(1e-15));
  CHECK(p[3] == 0.5);
  CHECK(map.chromosome_starts()[1] == 3);
  CHECK_THROWS_AS(map_from_positions(std::vector<std::string>{"1", "2", "1"},
                                     std::vector<double>{0, 0, 1}),
                  ConfigError);
  CHECK_THROWS_AS(map_from_positions(std::vector<std::string>{"1", "1"},
                                     std::vector<double>{5, 1}),
                  ConfigError);
}

TEST_CASE("save and load round trip") {
  const auto dir = testutil::scratch_dir("roundtrip");
  SyntheticSpec spec;
  spec.num_founders = 30;
  spec.num_loci = 50;
  spec.num_chromosomes = 3;
  spec.seed = 4;
  const auto ds = synthesize_founders(spec);
  save_dataset(ds, dir / "g.txt", dir / "m.csv");
  const auto back = load_dataset(dir / "g.txt", dir / "m.csv");
  CHECK(back == ds);
  const auto same = subset_markers(back, 50, RngStream(1, 1));
  save_dataset(same, dir / "g2.txt", dir / "m2.csv");
  CHECK(load_dataset(dir / "g2.txt", dir / "m2.csv") == ds);
}

TEST_CASE("malformed files report line numbers") {
  const auto dir = testutil::scratch_dir("malformed");
  const std::string header = "name,chrom,pos_cM,weight\n";
  write_text(dir / "m.csv", header + "a,1,0,1.5\nb,1,2,-0.5\n");
  write_text(dir / "g.txt", "00 11\n01 12\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "m.csv") == 2);
  write_text(dir / "g.txt", "00 11\n01\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "m.csv") == 2);
  write_text(dir / "g.txt", "00 11\n10 01\n");
  CHECK(load_dataset(dir / "g.txt", dir / "m.csv").num_founders() == 2);

  write_text(dir / "bad1.csv", header + "a,1,5,1\nb,1,2,1\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "bad1.csv") == 3);
  write_text(dir / "bad2.csv", header + "a,1,0,1\na,1,2,1\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "bad2.csv") == 3);
  write_text(dir / "bad3.csv", header + "a,1,0,x\nb,1,2,1\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "bad3.csv") == 2);
  write_text(dir / "bad4.csv", "name,pos\na,1\n");
  CHECK(parse_error_line(dir / "g.txt", dir / "bad4.csv") == 1);
  CHECK_THROWS_AS(load_dataset(dir / "missing.txt", dir / "m.csv"), ParseError);
}

TEST_CASE("marker subsets") {
  SyntheticSpec spec;
  spec.num_founders = 10;
  spec.num_loci = 200;
  spec.num_chromosomes = 4;
  spec.seed = 9;
  const auto ds = synthesize_founders(spec);
  CHECK(subset_markers(ds, 200, RngStream(3, 0)) == ds);
  CHECK(subset_markers(ds, 50, RngStream(3, 0)) == subset_markers(ds, 50, RngStream(3, 0)));
  CHECK_THROWS_AS(subset_markers(ds, 201, RngStream(3, 0)), ConfigError);
  RngStream rng(5, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto sub = subset_markers(ds, 1 + rng.below(200), rng.fork(trial));
    REQUIRE(sub.num_loci() == sub.genotypes[0].num_loci());
    for (std::size_t j = 1; j < sub.num_loci(); ++j) {
      if (sub.chromosomes[j] == sub.chromosomes[j - 1]) {
        REQUIRE(sub.positions_cm[j] >= sub.positions_cm[j - 1]);
      }
    }
    // surviving markers keep their original relative order
    std::size_t last = 0;
    for (std::size_t j = 0; j < sub.num_loci(); ++j) {
      const auto it = std::find(ds.marker_names.begin(), ds.marker_names.end(), sub.marker_names[j]);
      const auto idx = static_cast<std::size_t>(it - ds.marker_names.begin());
      REQUIRE(it != ds.marker_names.end());
      if (j > 0) REQUIRE(idx > last);
      last = idx;
      REQUIRE(sub.model.weights[j] == ds.model.weights[idx]);
    }
  }
}

TEST_CASE("synthetic founders") {
  SyntheticSpec spec;
  spec.num_founders = 40;
  spec.num_loci = 10000;
  spec.num_chromosomes = 5;
  spec.seed = 12;
  spec.allele_freq_spread = 1e6;
  const auto ds = synthesize_founders(spec);
  CHECK(ds == synthesize_founders(spec));
  CHECK(ds.num_founders() == 40);
  CHECK(ds.map.num_chromosomes() == 5);
  // allele frequencies are near 1/2; 80 copies per locus, pooled over 10^4 loci
  double total = 0;
  for (const auto& g : ds.genotypes) {
    for (auto a : g.data()) total += a;
  }
  CHECK(std::abs(total / (40.0 * 20000.0) - 0.5) < 0.01);

  spec.effect_scale = 0.0;
  spec.num_loci = 100;
  const auto zero = synthesize_founders(spec);
  for (const auto& g : zero.genotypes) CHECK(estimate_trait(g, zero.model) == 0.0);
  CHECK_THROWS_AS(synthesize_founders(SyntheticSpec{0, 10, 1, 0, 1.0, 1.0}), ConfigError);
}

TEST_CASE("per-locus allele frequencies under a large Beta shape") {
  SyntheticSpec spec;
  spec.num_founders = 2000;
  spec.num_loci = 200;
  spec.num_chromosomes = 2;
  spec.seed = 21;
  spec.allele_freq_spread = 1e6;
  const auto ds = synthesize_founders(spec);
  for (std::size_t j = 0; j < spec.num_loci; ++j) {
    double ones = 0;
    for (const auto& g : ds.genotypes) ones += g.allele(j, 0) + g.allele(j, 1);
    // binomial sd with 4000 copies is 0.0079; 4 sd bound
    CHECK(std::abs(ones / 4000.0 - 0.5) < 0.032);
  }
}

TEST_CASE("episode logs") {
  const auto dir = testutil::scratch_dir("episode_log");
  RngStream rng(3, 3);
  std::vector<GenerationRecord> records;
  for (std::size_t g = 0; g <= 10; ++g) {
    records.push_back({12345678901234567890ULL, g, rng.normal() * 1e5, rng.normal() / 3.0,
                       rng.uniform() * 1e-300, rng.normal()});
  }
  records[4].mean_genome_correlation = std::nan("");
  log_episode(dir / "ep.csv", records);
  const auto text = testutil::slurp(dir / "ep.csv");
  CHECK(text.substr(0, text.find('\n')) ==
        "seed,generation,best_trait,mean_trait,trait_std,mean_genome_correlation");
  CHECK(std::count(text.begin(), text.end(), '\n') == 12);
  const auto back = read_episode_log(dir / "ep.csv");
  REQUIRE(back.size() == 11);
  for (std::size_t g = 0; g <= 10; ++g) {
    if (g == 4) {
      CHECK(std::isnan(back[g].mean_genome_correlation));
      CHECK(back[g].best_trait == records[g].best_trait);
      continue;
    }
    CHECK(back[g] == records[g]);
  }
}

TEST_CASE("float formatting round trips") {
  RngStream rng(8, 8);
  for (int i = 0; i < 10000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, double(rng.below(40)) - 20.0);
    REQUIRE(parse_double(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
}

TEST_CASE("generation records") {
  RngStream rng(4, 4);
  const auto pop = testutil::random_population(6, 30, rng);
  const TraitModel model(testutil::random_weights(30, rng));
  const auto r = make_generation_record(9, pop, model);
  const auto traits = estimate_traits(pop, model);
  CHECK(r.best_trait == *std::max_element(traits.begin(), traits.end()));
  CHECK(r.trait_std == population_stddev(traits));
  const auto single = make_generation_record(9, Population({pop[0]}, 2), model);
  CHECK(std::isnan(single.mean_genome_correlation));
  CHECK(single.generation == 2);
}

}  // TEST_SUITE
