#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfdrive/nn/feature_grid.hpp"
#include "pfdrive/nn/param.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::nn {

// Per-call context for a forward pass. train enables dropout, batch-norm
// batch statistics and the caching needed for a later backward pass; eval
// runs are pure and cache nothing. Layers with stochastic behaviour draw
// from rng, which the owning model threads through deterministically.
struct Pass {
  bool train = false;
  Rng* rng = nullptr;
};

inline Pass eval_pass() { return Pass{false, nullptr}; }

// ---------------------------------------------------------------------------

struct Conv2dSpec {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int cin = 1, cout = 1;

  void validate() const;
  // Valid (no padding) output size: floor((in - k) / s) + 1.
  std::pair<int, int> out_hw(int in_h, int in_w) const;
};

// Valid-padding 2-D convolution. Weight layout (kh, kw, cin, cout) so the
// innermost accumulation runs contiguously over output channels.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const Conv2dSpec& spec, bool trainable, Rng& rng);

  FeatureGrid forward(const FeatureGrid& x, const Pass& pass);
  // Pops the most recent cached forward. Accumulates weight/bias gradients
  // (when trainable) and returns the gradient wrt the input.
  FeatureGrid backward(const FeatureGrid& dy);

  const Conv2dSpec& spec() const { return spec_; }
  void visit_params(const std::string& prefix, const ParamVisitor& visit);
  void clear_cache() { cache_.clear(); }

  Parameter weight;  // (kh, kw, cin, cout)
  Parameter bias;    // (cout)

 private:
  Conv2dSpec spec_;
  std::vector<FeatureGrid> cache_;
};

// ---------------------------------------------------------------------------

// Per-channel batch normalization over the spatial cells of one grid.
// Running statistics (momentum 0.9) are used in eval mode; they are exposed
// as non-trainable parameters so checkpoints carry them.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, bool trainable = true);

  FeatureGrid forward(const FeatureGrid& x, const Pass& pass);
  FeatureGrid backward(const FeatureGrid& dy);

  void visit_params(const std::string& prefix, const ParamVisitor& visit);
  void clear_cache() { cache_.clear(); }

  Parameter gamma;
  Parameter beta;
  Parameter running_mean;  // non-trainable state
  Parameter running_var;

  static constexpr double kMomentum = 0.9;
  static constexpr double kEps = 1e-5;

 private:
  struct Cache {
    FeatureGrid xhat;
    std::vector<double> inv_std;
  };
  int channels_ = 0;
  std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------

// Inverted dropout: scales kept values by 1/(1-rate) at train time so that
// eval mode is the identity.
class Dropout {
 public:
  Dropout() = default;
  explicit Dropout(double rate);

  FeatureGrid forward(const FeatureGrid& x, const Pass& pass);
  FeatureGrid backward(const FeatureGrid& dy);
  void clear_cache() { cache_.clear(); }

  double rate() const { return rate_; }

 private:
  double rate_ = 0.0;
  std::vector<std::vector<double>> cache_;  // masks
};

// ---------------------------------------------------------------------------

class Relu {
 public:
  FeatureGrid forward(const FeatureGrid& x, const Pass& pass);
  FeatureGrid backward(const FeatureGrid& dy);
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<FeatureGrid> cache_;  // inputs
};

// ---------------------------------------------------------------------------

enum class Activation { kLinear, kRelu };

// Fully-connected layer on flat vectors, affine map plus activation.
class Dense {
 public:
  Dense() = default;
  Dense(int in, int out, Activation act, bool trainable, Rng& rng);

  std::vector<double> forward(const std::vector<double>& x, const Pass& pass);
  std::vector<double> backward(const std::vector<double>& dy);

  void visit_params(const std::string& prefix, const ParamVisitor& visit);
  void clear_cache() { cache_.clear(); }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

  Parameter weight;  // (out, in) row-major
  Parameter bias;    // (out)

 private:
  struct Cache {
    std::vector<double> x;
    std::vector<double> preact;
  };
  int in_ = 0, out_ = 0;
  Activation act_ = Activation::kLinear;
  std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------

// conv -> batch-norm -> relu -> dropout, the block the encoder heads are
// made of. Batch-norm/dropout can be disabled (backbone layers are plain
// conv + relu).
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const Conv2dSpec& spec, bool batch_norm, double dropout_rate,
            bool relu, bool trainable, Rng& rng);

  FeatureGrid forward(const FeatureGrid& x, const Pass& pass);
  FeatureGrid backward(const FeatureGrid& dy);

  void visit_params(const std::string& prefix, const ParamVisitor& visit);
  void clear_cache();

  const Conv2dSpec& spec() const { return conv.spec(); }

  Conv2d conv;
  BatchNorm2d bn;
  Dropout dropout;
  Relu relu;
  bool has_bn = false;
  bool has_relu = true;
};

}  // namespace pfd::nn
