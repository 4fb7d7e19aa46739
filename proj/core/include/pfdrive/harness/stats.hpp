#pragma once

#include <cstdint>
#include <vector>

namespace pfd::stats {

double mean(const std::vector<double>& v);
// Sample standard deviation (n - 1 denominator); 0 for n < 2.
double sample_stddev(const std::vector<double>& v);

// Pearson correlation. Degenerate inputs (either side constant, or fewer
// than two points) return 0 with degenerate set.
struct Correlation {
  double r = 0.0;
  bool degenerate = false;
};
Correlation pearson(const std::vector<double>& a, const std::vector<double>& b);

// Upper critical value of the chi-square distribution by the
// Wilson-Hilferty cube approximation. alpha must be 0.01 or 0.05.
double chi_square_critical(int dof, double alpha);

// Goodness-of-fit of observed counts against equal expected frequencies.
struct ChiSquare {
  double stat = 0.0;
  double critical = 0.0;
  bool rejected = false;
};
ChiSquare chi_square_uniform(const std::vector<int64_t>& counts, double alpha);

// One-sample Kolmogorov-Smirnov test of values against Uniform[0, 1],
// using the asymptotic critical value c(alpha) / sqrt(n).
struct KsTest {
  double stat = 0.0;
  double critical = 0.0;
  bool rejected = false;
};
KsTest ks_uniform01(std::vector<double> values, double alpha);

// Paired sign-flip permutation test on per-video statistic pairs (a_i, b_i).
// Observed statistic is mean(a) - mean(b); the permutation distribution
// swaps a_i and b_i per pair. Two-sided p with the add-one rule.
struct PermutationTest {
  double observed = 0.0;
  double p_value = 1.0;
};
PermutationTest paired_permutation_test(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        int n_permutations, uint64_t seed);

}  // namespace pfd::stats
