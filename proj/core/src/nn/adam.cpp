#include "pfdrive/nn/adam.hpp"

#include <cmath>

#include "pfdrive/errors.hpp"

namespace pfd::nn {

void Adam::step(const std::function<void(const ParamVisitor&)>& visit_model) {
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  visit_model([&](const std::string& name, Parameter& p) {
    if (!p.trainable) return;
    Slots& s = slots_[name];
    if (s.m.empty()) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
    } else if (s.m.size() != p.size()) {
      throw ShapeError("adam: slot size mismatch for " + name);
    }
    for (size_t i = 0; i < p.size(); ++i) {
      double g = p.grad[i];
      s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
      s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = s.m[i] / bc1;
      double vhat = s.v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  });
}

void zero_grads(const std::function<void(const ParamVisitor&)>& visit_model) {
  visit_model([](const std::string&, Parameter& p) { p.zero_grad(); });
}

}  // namespace pfd::nn
