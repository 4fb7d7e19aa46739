#include "pfdrive/harness/stats.hpp"

#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::stats {

namespace {

// Standard normal upper quantiles for the supported alphas.
double z_upper(double alpha) {
  if (alpha == 0.01) return 2.3263478740408408;
  if (alpha == 0.05) return 1.6448536269514722;
  throw ConfigError("stats: alpha must be 0.01 or 0.05");
}

// Kolmogorov c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_c(double alpha) {
  return std::sqrt(-std::log(alpha / 2.0) / 2.0);
}

}  // namespace

double mean(const std::vector<double>& v) {
  if (v.empty()) throw ConfigError("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

Correlation pearson(const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("pearson: size mismatch");
  if (a.size() < 2) return {0.0, true};
  double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return {0.0, true};
  return {sab / std::sqrt(saa * sbb), false};
}

double chi_square_critical(int dof, double alpha) {
  if (dof < 1) throw ConfigError("chi_square_critical: dof must be >= 1");
  double k = static_cast<double>(dof);
  double z = z_upper(alpha);
  double t = 1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k));
  return k * t * t * t;
}

ChiSquare chi_square_uniform(const std::vector<int64_t>& counts,
                             double alpha) {
  if (counts.size() < 2)
    throw ConfigError("chi_square_uniform: need at least 2 bins");
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  if (total <= 0) throw ConfigError("chi_square_uniform: no observations");
  double expected =
      static_cast<double>(total) / static_cast<double>(counts.size());
  ChiSquare out;
  for (int64_t c : counts) {
    double d = static_cast<double>(c) - expected;
    out.stat += d * d / expected;
  }
  out.critical = chi_square_critical(static_cast<int>(counts.size()) - 1, alpha);
  out.rejected = out.stat > out.critical;
  return out;
}

KsTest ks_uniform01(std::vector<double> values, double alpha) {
  if (values.empty()) throw ConfigError("ks_uniform01: empty sample");
  std::sort(values.begin(), values.end());
  double n = static_cast<double>(values.size());
  KsTest out;
  for (size_t i = 0; i < values.size(); ++i) {
    double v = std::clamp(values[i], 0.0, 1.0);
    double hi = (static_cast<double>(i) + 1.0) / n - v;
    double lo = v - static_cast<double>(i) / n;
    out.stat = std::max({out.stat, hi, lo});
  }
  out.critical = ks_c(alpha) / std::sqrt(n);
  out.rejected = out.stat > out.critical;
  return out;
}

PermutationTest paired_permutation_test(const std::vector<double>& a,
                                        const std::vector<double>& b,
                                        int n_permutations, uint64_t seed) {
  if (a.size() != b.size() || a.empty())
    throw ConfigError("permutation test: need equal-size non-empty samples");
  if (n_permutations < 1)
    throw ConfigError("permutation test: need at least one permutation");
  size_t n = a.size();
  std::vector<double> diff(n);
  double obs = 0.0;
  for (size_t i = 0; i < n; ++i) {
    diff[i] = a[i] - b[i];
    obs += diff[i];
  }
  obs /= static_cast<double>(n);

  nn::Rng rng(seed);
  int at_least = 0;
  for (int p = 0; p < n_permutations; ++p) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i)
      s += rng.bernoulli(0.5) ? diff[i] : -diff[i];
    s /= static_cast<double>(n);
    if (std::abs(s) >= std::abs(obs)) ++at_least;
  }
  PermutationTest out;
  out.observed = obs;
  out.p_value = (1.0 + at_least) / (1.0 + n_permutations);
  return out;
}

}  // namespace pfd::stats
