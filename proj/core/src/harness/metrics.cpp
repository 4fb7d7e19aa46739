#include "pfdrive/harness/metrics.hpp"

#include <cmath>
#include <cstdlib>

#include "pfdrive/errors.hpp"
#include "pfdrive/harness/stats.hpp"

namespace pfd::harness {

nlohmann::json Metrics::to_json() const {
  return {{"mae", mae},
          {"rmse", rmse},
          {"corr", corr},
          {"corr_degenerate", corr_degenerate},
          {"count", count}};
}

Metrics compute_metrics(const std::vector<double>& pred,
                        const std::vector<double>& target) {
  if (pred.size() != target.size())
    throw ConfigError("metrics: prediction/target size mismatch");
  if (pred.empty()) throw ConfigError("metrics: empty target set");

  double abs_sum = 0.0, sq_sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  Metrics m;
  m.count = static_cast<int64_t>(pred.size());
  m.mae = abs_sum / static_cast<double>(pred.size());
  m.rmse = std::sqrt(sq_sum / static_cast<double>(pred.size()));

  stats::Correlation c = stats::pearson(pred, target);
  m.corr = c.r;
  m.corr_degenerate = c.degenerate;

  if (m.mae > m.rmse + 1e-12)
    throw StateError("metrics: MAE exceeded RMSE, metric computation is broken");
  return m;
}

}  // namespace pfd::harness
