#include <algorithm>
#include <cmath>
#include <numeric>

#include "pfdrive/fovea/fovea.hpp"

namespace pfd::fovea {

FoveaPolicy fovea_policy_from_string(const std::string& s) {
  if (s == "none") return FoveaPolicy::kNone;
  if (s == "random") return FoveaPolicy::kRandom;
  if (s == "central") return FoveaPolicy::kCentral;
  if (s == "top-k" || s == "topk") return FoveaPolicy::kTopK;
  if (s == "sampled") return FoveaPolicy::kSampled;
  throw ConfigError("unknown fovea policy: " + s);
}

std::string to_string(FoveaPolicy p) {
  switch (p) {
    case FoveaPolicy::kNone: return "none";
    case FoveaPolicy::kRandom: return "random";
    case FoveaPolicy::kCentral: return "central";
    case FoveaPolicy::kTopK: return "top-k";
    case FoveaPolicy::kSampled: return "sampled";
  }
  throw ConfigError("unknown fovea policy value");
}

std::vector<double> sampling_distribution(const AttentionMap& map,
                                          double temperature) {
  if (!(temperature > 0.0))
    throw ConfigError("sampling distribution: temperature must be > 0");
  // p_i = exp(log q_i / T) = q_i^(1/T); computed against the max log for
  // stability at small T. Zero-mass cells stay at zero.
  double max_log = -std::numeric_limits<double>::infinity();
  for (double q : map.grid.values)
    if (q > 0.0) max_log = std::max(max_log, std::log(q));
  if (!std::isfinite(max_log))
    throw ConfigError("sampling distribution: all-zero attention map");

  std::vector<double> p(map.grid.values.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    double q = map.grid.values[i];
    if (q > 0.0) {
      p[i] = std::exp((std::log(q) - max_log) / temperature);
      total += p[i];
    }
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<Cell> sample_fovea_cells(const AttentionMap& map,
                                     const FoveaSelectionConfig& config,
                                     nn::Rng& rng) {
  config.validate();
  std::vector<double> p = sampling_distribution(map, config.temperature);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());

  std::vector<Cell> cells;
  cells.reserve(config.count);
  for (int n = 0; n < config.count; ++n) {
    double u = rng.uniform();
    size_t idx = std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
    // Guard the u ~ 1.0 edge and any trailing zero-probability cells.
    while (idx + 1 < p.size() && p[idx] == 0.0) ++idx;
    if (idx >= p.size()) idx = p.size() - 1;
    while (idx > 0 && p[idx] == 0.0) --idx;
    cells.push_back({static_cast<int>(idx) / kGridCols,
                     static_cast<int>(idx) % kGridCols});
  }
  return cells;
}

std::vector<Cell> topk_fovea_cells(const AttentionMap& map, int n) {
  if (n < 1 || n > kGridRows * kGridCols)
    throw ConfigError("topk: n outside [1, grid size]");
  std::vector<int> order(kGridRows * kGridCols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return map.grid.values[a] > map.grid.values[b];  // ties keep row-major
  });
  std::vector<Cell> cells;
  cells.reserve(n);
  for (int k = 0; k < n; ++k)
    cells.push_back({order[k] / kGridCols, order[k] % kGridCols});
  return cells;
}

std::vector<Cell> random_fovea_cells(const FoveaSelectionConfig& config,
                                     nn::Rng& rng) {
  config.validate();
  std::vector<Cell> cells;
  cells.reserve(config.count);
  for (int n = 0; n < config.count; ++n) {
    int idx = rng.uniform_int(kGridRows * kGridCols);
    cells.push_back({idx / kGridCols, idx % kGridCols});
  }
  return cells;
}

std::vector<Cell> central_fovea_cells() {
  // Patch centers at (frame_h/2, frame_w/2 -/+ patch/2): the two patches
  // meet at the vertical midline and tile the central patch x 2*patch box.
  int mid_row = kGridRows / 2;
  return {{mid_row, kGridCols / 2 - 2}, {mid_row, kGridCols / 2 + 1}};
}

}  // namespace pfd::fovea
