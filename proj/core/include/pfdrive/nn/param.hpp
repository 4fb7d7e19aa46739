#pragma once

#include <functional>
#include <string>
#include <vector>

namespace pfd::nn {

// One flat parameter array plus its gradient accumulator. Frozen parameters
// never receive gradient and are skipped by the optimizer.
struct Parameter {
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;

  void resize(size_t n) {
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
  }
  void zero_grad() { grad.assign(grad.size(), 0.0); }
  size_t size() const { return value.size(); }
};

// Layers and models expose their parameters by name through this visitor.
// Names are hierarchical ("planner.fc1.weight") and stable across runs;
// the optimizer and the checkpoint format key on them.
using ParamVisitor = std::function<void(const std::string&, Parameter&)>;

}  // namespace pfd::nn
