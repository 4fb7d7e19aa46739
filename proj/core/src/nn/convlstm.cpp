#include "pfdrive/nn/convlstm.hpp"

#include <cmath>

#include "pfdrive/nn/init.hpp"

namespace pfd::nn {

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}

ConvLstmCell::ConvLstmCell(int rows, int cols, int in_channels,
                           int hidden_channels, int kernel, bool trainable,
                           Rng& rng)
    : rows_(rows), cols_(cols), cin_(in_channels), ch_(hidden_channels),
      kernel_(kernel) {
  if (kernel <= 0 || kernel % 2 == 0)
    throw ConfigError("convlstm: kernel must be odd and positive");
  if (rows <= 0 || cols <= 0 || in_channels <= 0 || hidden_channels <= 0)
    throw ConfigError("convlstm: non-positive shape");
  size_t n = static_cast<size_t>(kernel) * kernel * (cin_ + ch_) * 4 * ch_;
  weight.resize(n);
  bias.resize(4 * ch_);
  weight.trainable = trainable;
  bias.trainable = trainable;
  int fan_in = kernel * kernel * (cin_ + ch_);
  int fan_out = kernel * kernel * 4 * ch_;
  xavier_init(weight.value, fan_in, fan_out, rng);
  for (int c = ch_; c < 2 * ch_; ++c) bias.value[c] = 1.0;  // forget gate
}

ConvLstmState ConvLstmCell::initial_state(int64_t clip_id) const {
  ConvLstmState s;
  s.hidden = FeatureGrid(rows_, cols_, ch_);
  s.cell = FeatureGrid(rows_, cols_, ch_);
  s.clip_id = clip_id;
  return s;
}

// Same-padding convolution of z (rows x cols x (cin+ch)) producing the gate
// pre-activations (rows x cols x 4*ch).
FeatureGrid ConvLstmCell::gate_preact(const FeatureGrid& z) const {
  const int ZC = cin_ + ch_, GC = 4 * ch_;
  const int pad = (kernel_ - 1) / 2;
  FeatureGrid a(rows_, cols_, GC);
  const double* w = weight.value.data();
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) {
      double* acc = a.cell(i, j);
      for (int g = 0; g < GC; ++g) acc[g] = bias.value[g];
      for (int r = 0; r < kernel_; ++r) {
        int zi = i + r - pad;
        if (zi < 0 || zi >= rows_) continue;
        for (int s = 0; s < kernel_; ++s) {
          int zj = j + s - pad;
          if (zj < 0 || zj >= cols_) continue;
          const double* zc = z.cell(zi, zj);
          const double* wrs =
              w + (static_cast<size_t>(r) * kernel_ + s) * ZC * GC;
          for (int c = 0; c < ZC; ++c) {
            double zv = zc[c];
            const double* wr = wrs + static_cast<size_t>(c) * GC;
            for (int g = 0; g < GC; ++g) acc[g] += zv * wr[g];
          }
        }
      }
    }
  }
  return a;
}

void ConvLstmCell::gate_conv_backward(const FeatureGrid& z,
                                      const FeatureGrid& da, FeatureGrid* dz) {
  const int ZC = cin_ + ch_, GC = 4 * ch_;
  const int pad = (kernel_ - 1) / 2;
  const double* w = weight.value.data();
  const bool train = weight.trainable;
  double* dw = weight.grad.data();
  double* db = bias.grad.data();

  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) {
      const double* g = da.cell(i, j);
      if (train)
        for (int k = 0; k < GC; ++k) db[k] += g[k];
      for (int r = 0; r < kernel_; ++r) {
        int zi = i + r - pad;
        if (zi < 0 || zi >= rows_) continue;
        for (int s = 0; s < kernel_; ++s) {
          int zj = j + s - pad;
          if (zj < 0 || zj >= cols_) continue;
          const double* zc = z.cell(zi, zj);
          double* dzc = dz->cell(zi, zj);
          size_t base = (static_cast<size_t>(r) * kernel_ + s) * ZC * GC;
          for (int c = 0; c < ZC; ++c) {
            const double* wr = w + base + static_cast<size_t>(c) * GC;
            double acc = 0.0;
            for (int k = 0; k < GC; ++k) acc += g[k] * wr[k];
            dzc[c] += acc;
            if (train) {
              double zv = zc[c];
              double* dwr = dw + base + static_cast<size_t>(c) * GC;
              for (int k = 0; k < GC; ++k) dwr[k] += zv * g[k];
            }
          }
        }
      }
    }
  }
}

FeatureGrid ConvLstmCell::step(const FeatureGrid& x, ConvLstmState& state,
                               const Pass& pass) {
  require_shape(x, rows_, cols_, cin_, "convlstm input");
  if (!state.hidden.same_shape(state.cell) || state.hidden.height != rows_ ||
      state.hidden.width != cols_ || state.hidden.channels != ch_)
    throw ShapeError("convlstm: state shape mismatch, hidden " +
                     state.hidden.shape_str());

  const int cells = rows_ * cols_;
  FeatureGrid z(rows_, cols_, cin_ + ch_);
  for (int p = 0; p < cells; ++p) {
    double* zp = z.values.data() + static_cast<size_t>(p) * (cin_ + ch_);
    const double* xp = x.values.data() + static_cast<size_t>(p) * cin_;
    const double* hp = state.hidden.values.data() + static_cast<size_t>(p) * ch_;
    for (int c = 0; c < cin_; ++c) zp[c] = xp[c];
    for (int c = 0; c < ch_; ++c) zp[cin_ + c] = hp[c];
  }

  FeatureGrid a = gate_preact(z);
  FeatureGrid gates(rows_, cols_, 4 * ch_);
  FeatureGrid c_new(rows_, cols_, ch_);
  FeatureGrid tanh_c(rows_, cols_, ch_);
  FeatureGrid h_new(rows_, cols_, ch_);

  for (int p = 0; p < cells; ++p) {
    const double* ap = a.values.data() + static_cast<size_t>(p) * 4 * ch_;
    double* gp = gates.values.data() + static_cast<size_t>(p) * 4 * ch_;
    const double* cp = state.cell.values.data() + static_cast<size_t>(p) * ch_;
    double* cn = c_new.values.data() + static_cast<size_t>(p) * ch_;
    double* tc = tanh_c.values.data() + static_cast<size_t>(p) * ch_;
    double* hn = h_new.values.data() + static_cast<size_t>(p) * ch_;
    for (int c = 0; c < ch_; ++c) {
      double gi = sigmoid(ap[c]);
      double gf = sigmoid(ap[ch_ + c]);
      double gg = std::tanh(ap[2 * ch_ + c]);
      double go = sigmoid(ap[3 * ch_ + c]);
      gp[c] = gi;
      gp[ch_ + c] = gf;
      gp[2 * ch_ + c] = gg;
      gp[3 * ch_ + c] = go;
      cn[c] = gf * cp[c] + gi * gg;
      tc[c] = std::tanh(cn[c]);
      hn[c] = go * tc[c];
    }
  }

  if (pass.train)
    cache_.push_back({std::move(z), std::move(gates), state.cell, tanh_c});

  state.cell = std::move(c_new);
  state.hidden = h_new;
  return h_new;
}

FeatureGrid ConvLstmCell::backward_step(const FeatureGrid& dh,
                                        const FeatureGrid& dc_next,
                                        FeatureGrid* dh_prev,
                                        FeatureGrid* dc_prev) {
  if (cache_.empty())
    throw StateError("convlstm: backward called without a recorded forward");
  StepCache cache = std::move(cache_.back());
  cache_.pop_back();

  require_shape(dh, rows_, cols_, ch_, "convlstm backward dh");
  const int cells = rows_ * cols_;

  // Callers reuse one buffer pair for the recurrent gradients, so dh/dc_next
  // may alias *dh_prev/*dc_prev. Compute into locals, assign outputs last.
  FeatureGrid da(rows_, cols_, 4 * ch_);
  FeatureGrid dc_prev_local(rows_, cols_, ch_);

  for (int p = 0; p < cells; ++p) {
    const double* gp = cache.gates.values.data() + static_cast<size_t>(p) * 4 * ch_;
    const double* tc = cache.tanh_c.values.data() + static_cast<size_t>(p) * ch_;
    const double* cp = cache.c_prev.values.data() + static_cast<size_t>(p) * ch_;
    const double* dhp = dh.values.data() + static_cast<size_t>(p) * ch_;
    const double* dcn = dc_next.values.data() + static_cast<size_t>(p) * ch_;
    double* dap = da.values.data() + static_cast<size_t>(p) * 4 * ch_;
    double* dcp = dc_prev_local.values.data() + static_cast<size_t>(p) * ch_;
    for (int c = 0; c < ch_; ++c) {
      double gi = gp[c], gf = gp[ch_ + c], gg = gp[2 * ch_ + c], go = gp[3 * ch_ + c];
      double t = tc[c];
      double d_o = dhp[c] * t;
      double dc = dcn[c] + dhp[c] * go * (1.0 - t * t);
      double d_f = dc * cp[c];
      double d_i = dc * gg;
      double d_g = dc * gi;
      dcp[c] = dc * gf;
      dap[c] = d_i * gi * (1.0 - gi);
      dap[ch_ + c] = d_f * gf * (1.0 - gf);
      dap[2 * ch_ + c] = d_g * (1.0 - gg * gg);
      dap[3 * ch_ + c] = d_o * go * (1.0 - go);
    }
  }

  FeatureGrid dz(rows_, cols_, cin_ + ch_);
  gate_conv_backward(cache.z, da, &dz);

  FeatureGrid dx(rows_, cols_, cin_);
  FeatureGrid dh_prev_local(rows_, cols_, ch_);
  for (int p = 0; p < cells; ++p) {
    const double* dzp = dz.values.data() + static_cast<size_t>(p) * (cin_ + ch_);
    double* dxp = dx.values.data() + static_cast<size_t>(p) * cin_;
    double* dhp = dh_prev_local.values.data() + static_cast<size_t>(p) * ch_;
    for (int c = 0; c < cin_; ++c) dxp[c] = dzp[c];
    for (int c = 0; c < ch_; ++c) dhp[c] = dzp[cin_ + c];
  }
  *dh_prev = std::move(dh_prev_local);
  *dc_prev = std::move(dc_prev_local);
  return dx;
}

void ConvLstmCell::visit_params(const std::string& prefix,
                                const ParamVisitor& visit) {
  visit(prefix + ".weight", weight);
  visit(prefix + ".bias", bias);
}

}  // namespace pfd::nn
