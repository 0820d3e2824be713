#pragma once

#include <span>

namespace breedrl {

double mean(std::span<const double> values);
// Sample standard deviation (divisor n - 1).
double sample_stddev(std::span<const double> values);
// Standard error of the mean.
double standard_error(std::span<const double> values);

struct TTestResult {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  double degrees_of_freedom = 0.0;
  double p_value = 1.0;  // one-sided, H1: mean(a - b) > 0
};

// Paired one-sided t-test of a over b. Identical samples give p = 1.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace breedrl
