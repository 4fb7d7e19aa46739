#pragma once

#include <map>
#include <string>
#include <vector>

#include "pfdrive/nn/param.hpp"

namespace pfd::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment slots are keyed by parameter name, so the
// optimizer works against any model exposing visit_params. Frozen
// parameters are skipped entirely.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

  // Applies one update using the gradients currently accumulated in the
  // visited parameters, then leaves the gradients untouched (callers zero
  // them). Deterministic given inputs.
  void step(const std::function<void(const ParamVisitor&)>& visit_model);

  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Slots {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::map<std::string, Slots> slots_;
};

// Zeroes gradient accumulators of every visited parameter.
void zero_grads(const std::function<void(const ParamVisitor&)>& visit_model);

}  // namespace pfd::nn
