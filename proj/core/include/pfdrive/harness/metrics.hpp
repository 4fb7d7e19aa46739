#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace pfd::harness {

// Pooled regression metrics over prediction/target pairs (km/h).
struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  double corr = 0.0;            // Pearson; 0 when degenerate
  bool corr_degenerate = false;  // either side constant
  int64_t count = 0;

  nlohmann::json to_json() const;
};

// MAE, RMSE and Pearson correlation. Empty or mismatched inputs are
// rejected; a constant side yields corr 0 with the degenerate flag set.
Metrics compute_metrics(const std::vector<double>& pred,
                        const std::vector<double>& target);

}  // namespace pfd::harness
