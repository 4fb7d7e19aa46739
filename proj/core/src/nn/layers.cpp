#include "pfdrive/nn/layers.hpp"

#include <cmath>

#include "pfdrive/nn/init.hpp"

namespace pfd::nn {

// ---------------------------------------------------------------- Conv2d --

void Conv2dSpec::validate() const {
  if (kh <= 0 || kw <= 0 || sh <= 0 || sw <= 0 || cin <= 0 || cout <= 0)
    throw ShapeError("Conv2dSpec: kernel, stride and channels must be positive");
}

std::pair<int, int> Conv2dSpec::out_hw(int in_h, int in_w) const {
  if (in_h < kh || in_w < kw)
    throw ShapeError("conv2d: input " + std::to_string(in_h) + "x" +
                     std::to_string(in_w) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  return {(in_h - kh) / sh + 1, (in_w - kw) / sw + 1};
}

Conv2d::Conv2d(const Conv2dSpec& spec, bool trainable, Rng& rng) : spec_(spec) {
  spec_.validate();
  size_t n = static_cast<size_t>(spec.kh) * spec.kw * spec.cin * spec.cout;
  weight.resize(n);
  bias.resize(spec.cout);
  weight.trainable = trainable;
  bias.trainable = trainable;
  int fan_in = spec.kh * spec.kw * spec.cin;
  int fan_out = spec.kh * spec.kw * spec.cout;
  xavier_init(weight.value, fan_in, fan_out, rng);
}

FeatureGrid Conv2d::forward(const FeatureGrid& x, const Pass& pass) {
  if (x.channels != spec_.cin)
    throw ShapeError("conv2d: input has " + std::to_string(x.channels) +
                     " channels, layer expects " + std::to_string(spec_.cin));
  auto [oh, ow] = spec_.out_hw(x.height, x.width);
  FeatureGrid y(oh, ow, spec_.cout);

  const int K = spec_.cout, C = spec_.cin;
  const double* w = weight.value.data();
  const double* b = bias.value.data();
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double* acc = y.cell(i, j);
      for (int k = 0; k < K; ++k) acc[k] = b[k];
      for (int r = 0; r < spec_.kh; ++r) {
        for (int s = 0; s < spec_.kw; ++s) {
          const double* xc = x.cell(i * spec_.sh + r, j * spec_.sw + s);
          const double* wrs = w + (static_cast<size_t>(r) * spec_.kw + s) * C * K;
          for (int c = 0; c < C; ++c) {
            double xv = xc[c];
            const double* wr = wrs + static_cast<size_t>(c) * K;
            for (int k = 0; k < K; ++k) acc[k] += xv * wr[k];
          }
        }
      }
    }
  }
  if (pass.train) cache_.push_back(x);
  return y;
}

FeatureGrid Conv2d::backward(const FeatureGrid& dy) {
  if (cache_.empty())
    throw StateError("conv2d: backward called without a recorded forward");
  FeatureGrid x = std::move(cache_.back());
  cache_.pop_back();

  auto [oh, ow] = spec_.out_hw(x.height, x.width);
  require_shape(dy, oh, ow, spec_.cout, "conv2d backward");

  FeatureGrid dx(x.height, x.width, x.channels);
  const int K = spec_.cout, C = spec_.cin;
  const double* w = weight.value.data();
  const bool train = weight.trainable;
  double* dw = weight.grad.data();
  double* db = bias.grad.data();

  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const double* g = dy.cell(i, j);
      if (train)
        for (int k = 0; k < K; ++k) db[k] += g[k];
      for (int r = 0; r < spec_.kh; ++r) {
        for (int s = 0; s < spec_.kw; ++s) {
          const double* xc = x.cell(i * spec_.sh + r, j * spec_.sw + s);
          double* dxc = dx.cell(i * spec_.sh + r, j * spec_.sw + s);
          size_t base = (static_cast<size_t>(r) * spec_.kw + s) * C * K;
          for (int c = 0; c < C; ++c) {
            const double* wr = w + base + static_cast<size_t>(c) * K;
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += g[k] * wr[k];
            dxc[c] += acc;
            if (train) {
              double xv = xc[c];
              double* dwr = dw + base + static_cast<size_t>(c) * K;
              for (int k = 0; k < K; ++k) dwr[k] += xv * g[k];
            }
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::visit_params(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".weight", weight);
  visit(prefix + ".bias", bias);
}

// ----------------------------------------------------------- BatchNorm2d --

BatchNorm2d::BatchNorm2d(int channels, bool trainable) : channels_(channels) {
  gamma.resize(channels);
  beta.resize(channels);
  running_mean.resize(channels);
  running_var.resize(channels);
  gamma.value.assign(channels, 1.0);
  running_var.value.assign(channels, 1.0);
  gamma.trainable = trainable;
  beta.trainable = trainable;
  running_mean.trainable = false;
  running_var.trainable = false;
}

FeatureGrid BatchNorm2d::forward(const FeatureGrid& x, const Pass& pass) {
  if (x.channels != channels_)
    throw ShapeError("batch-norm: channel mismatch, got " + x.shape_str());
  const int N = x.height * x.width;
  FeatureGrid y(x.height, x.width, channels_);

  if (!pass.train) {
    for (int c = 0; c < channels_; ++c) {
      double inv = 1.0 / std::sqrt(running_var.value[c] + kEps);
      double scale = gamma.value[c] * inv;
      double shift = beta.value[c] - running_mean.value[c] * scale;
      for (int p = 0; p < N; ++p) {
        size_t idx = static_cast<size_t>(p) * channels_ + c;
        y.values[idx] = x.values[idx] * scale + shift;
      }
    }
    return y;
  }

  Cache cache;
  cache.xhat = FeatureGrid(x.height, x.width, channels_);
  cache.inv_std.resize(channels_);
  for (int c = 0; c < channels_; ++c) {
    double mean = 0.0;
    for (int p = 0; p < N; ++p)
      mean += x.values[static_cast<size_t>(p) * channels_ + c];
    mean /= N;
    double var = 0.0;
    for (int p = 0; p < N; ++p) {
      double d = x.values[static_cast<size_t>(p) * channels_ + c] - mean;
      var += d * d;
    }
    var /= N;
    double inv = 1.0 / std::sqrt(var + kEps);
    cache.inv_std[c] = inv;
    for (int p = 0; p < N; ++p) {
      size_t idx = static_cast<size_t>(p) * channels_ + c;
      double xh = (x.values[idx] - mean) * inv;
      cache.xhat.values[idx] = xh;
      y.values[idx] = gamma.value[c] * xh + beta.value[c];
    }
    running_mean.value[c] = kMomentum * running_mean.value[c] + (1 - kMomentum) * mean;
    running_var.value[c] = kMomentum * running_var.value[c] + (1 - kMomentum) * var;
  }
  cache_.push_back(std::move(cache));
  return y;
}

FeatureGrid BatchNorm2d::backward(const FeatureGrid& dy) {
  if (cache_.empty())
    throw StateError("batch-norm: backward called without a recorded forward");
  Cache cache = std::move(cache_.back());
  cache_.pop_back();

  const int N = dy.height * dy.width;
  FeatureGrid dx(dy.height, dy.width, channels_);
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int p = 0; p < N; ++p) {
      size_t idx = static_cast<size_t>(p) * channels_ + c;
      sum_dy += dy.values[idx];
      sum_dy_xhat += dy.values[idx] * cache.xhat.values[idx];
    }
    if (gamma.trainable) {
      beta.grad[c] += sum_dy;
      gamma.grad[c] += sum_dy_xhat;
    }
    double g = gamma.value[c];
    double inv = cache.inv_std[c];
    for (int p = 0; p < N; ++p) {
      size_t idx = static_cast<size_t>(p) * channels_ + c;
      dx.values[idx] = g * inv / N *
                       (N * dy.values[idx] - sum_dy -
                        cache.xhat.values[idx] * sum_dy_xhat);
    }
  }
  return dx;
}

void BatchNorm2d::visit_params(const std::string& prefix,
                               const ParamVisitor& visit) {
  visit(prefix + ".gamma", gamma);
  visit(prefix + ".beta", beta);
  visit(prefix + ".running_mean", running_mean);
  visit(prefix + ".running_var", running_var);
}

// --------------------------------------------------------------- Dropout --

Dropout::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0, 1)");
}

FeatureGrid Dropout::forward(const FeatureGrid& x, const Pass& pass) {
  if (!pass.train || rate_ == 0.0) {
    if (pass.train) cache_.emplace_back();  // identity marker
    return x;
  }
  if (!pass.rng) throw StateError("dropout: training pass needs an rng");
  double keep_scale = 1.0 / (1.0 - rate_);
  std::vector<double> mask(x.size());
  FeatureGrid y = x;
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = pass.rng->uniform() < rate_ ? 0.0 : keep_scale;
    y.values[i] *= mask[i];
  }
  cache_.push_back(std::move(mask));
  return y;
}

FeatureGrid Dropout::backward(const FeatureGrid& dy) {
  if (cache_.empty())
    throw StateError("dropout: backward called without a recorded forward");
  std::vector<double> mask = std::move(cache_.back());
  cache_.pop_back();
  if (mask.empty()) return dy;
  FeatureGrid dx = dy;
  for (size_t i = 0; i < mask.size(); ++i) dx.values[i] *= mask[i];
  return dx;
}

// ------------------------------------------------------------------ Relu --

FeatureGrid Relu::forward(const FeatureGrid& x, const Pass& pass) {
  FeatureGrid y = x;
  for (double& v : y.values)
    if (v < 0) v = 0;
  if (pass.train) cache_.push_back(x);
  return y;
}

FeatureGrid Relu::backward(const FeatureGrid& dy) {
  if (cache_.empty())
    throw StateError("relu: backward called without a recorded forward");
  FeatureGrid x = std::move(cache_.back());
  cache_.pop_back();
  FeatureGrid dx = dy;
  for (size_t i = 0; i < dx.values.size(); ++i)
    if (x.values[i] <= 0) dx.values[i] = 0;
  return dx;
}

// ----------------------------------------------------------------- Dense --

Dense::Dense(int in, int out, Activation act, bool trainable, Rng& rng)
    : in_(in), out_(out), act_(act) {
  if (in <= 0 || out <= 0) throw ShapeError("dense: dims must be positive");
  weight.resize(static_cast<size_t>(in) * out);
  bias.resize(out);
  weight.trainable = trainable;
  bias.trainable = trainable;
  xavier_init(weight.value, in, out, rng);
  // Small uniform bias init (U(-1/sqrt(in), 1/sqrt(in))) keeps relu
  // preactivations off the exact kink that an all-zero stack would sit on.
  double b = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : bias.value) v = rng.uniform(-b, b);
}

std::vector<double> Dense::forward(const std::vector<double>& x,
                                   const Pass& pass) {
  if (static_cast<int>(x.size()) != in_)
    throw ShapeError("dense: input length " + std::to_string(x.size()) +
                     ", layer expects " + std::to_string(in_));
  std::vector<double> pre(out_);
  for (int o = 0; o < out_; ++o) {
    const double* wr = weight.value.data() + static_cast<size_t>(o) * in_;
    double acc = bias.value[o];
    for (int i = 0; i < in_; ++i) acc += wr[i] * x[i];
    pre[o] = acc;
  }
  std::vector<double> y = pre;
  if (act_ == Activation::kRelu)
    for (double& v : y)
      if (v < 0) v = 0;
  if (pass.train) cache_.push_back({x, std::move(pre)});
  return y;
}

std::vector<double> Dense::backward(const std::vector<double>& dy) {
  if (cache_.empty())
    throw StateError("dense: backward called without a recorded forward");
  Cache cache = std::move(cache_.back());
  cache_.pop_back();

  std::vector<double> dpre = dy;
  if (act_ == Activation::kRelu)
    for (int o = 0; o < out_; ++o)
      if (cache.preact[o] <= 0) dpre[o] = 0;

  std::vector<double> dx(in_, 0.0);
  const bool train = weight.trainable;
  for (int o = 0; o < out_; ++o) {
    double g = dpre[o];
    const double* wr = weight.value.data() + static_cast<size_t>(o) * in_;
    double* dwr = weight.grad.data() + static_cast<size_t>(o) * in_;
    if (train) bias.grad[o] += g;
    for (int i = 0; i < in_; ++i) {
      dx[i] += g * wr[i];
      if (train) dwr[i] += g * cache.x[i];
    }
  }
  return dx;
}

void Dense::visit_params(const std::string& prefix, const ParamVisitor& visit) {
  visit(prefix + ".weight", weight);
  visit(prefix + ".bias", bias);
}

// ------------------------------------------------------------- ConvBlock --

ConvBlock::ConvBlock(const Conv2dSpec& spec, bool batch_norm,
                     double dropout_rate, bool relu, bool trainable, Rng& rng)
    : conv(spec, trainable, rng),
      dropout(dropout_rate),
      has_bn(batch_norm),
      has_relu(relu) {
  if (batch_norm) bn = BatchNorm2d(spec.cout, trainable);
}

FeatureGrid ConvBlock::forward(const FeatureGrid& x, const Pass& pass) {
  FeatureGrid y = conv.forward(x, pass);
  if (has_bn) y = bn.forward(y, pass);
  if (has_relu) y = relu.forward(y, pass);
  y = dropout.forward(y, pass);
  return y;
}

FeatureGrid ConvBlock::backward(const FeatureGrid& dy) {
  FeatureGrid g = dropout.backward(dy);
  if (has_relu) g = relu.backward(g);
  if (has_bn) g = bn.backward(g);
  return conv.backward(g);
}

void ConvBlock::visit_params(const std::string& prefix,
                             const ParamVisitor& visit) {
  conv.visit_params(prefix, visit);
  if (has_bn) bn.visit_params(prefix + ".bn", visit);
}

void ConvBlock::clear_cache() {
  conv.clear_cache();
  bn.clear_cache();
  dropout.clear_cache();
  relu.clear_cache();
}

}  // namespace pfd::nn
