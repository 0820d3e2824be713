#include "breedrl/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <vector>

#include "breedrl/errors.hpp"

namespace breedrl {

double mean(std::span<const double> values) {
  if (values.empty()) throw DomainError("mean of an empty sample");
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("sample standard deviation needs two values");
  const double mu = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double standard_error(std::span<const double> values) {
  return sample_stddev(values) / std::sqrt(static_cast<double>(values.size()));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("paired samples differ in length");
  if (a.size() < 2) throw DomainError("paired t-test needs at least two pairs");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];

  TTestResult r;
  r.mean_difference = mean(diff);
  r.degrees_of_freedom = static_cast<double>(diff.size() - 1);
  const double se = standard_error(diff);
  if (se == 0.0) {
    r.t_statistic = r.mean_difference > 0 ? HUGE_VAL : (r.mean_difference < 0 ? -HUGE_VAL : 0.0);
    r.p_value = r.mean_difference > 0 ? 0.0 : 1.0;
    return r;
  }
  r.t_statistic = r.mean_difference / se;
  const boost::math::students_t dist(r.degrees_of_freedom);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t_statistic));
  return r;
}

}  // namespace breedrl
