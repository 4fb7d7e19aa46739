#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfdrive/nn/feature_grid.hpp"
#include "pfdrive/nn/param.hpp"
#include "pfdrive/nn/rng.hpp"
#include "pfdrive/nn/layers.hpp"

namespace pfd::nn {

// Recurrent state of one convolutional LSTM. Zero-initialized at sequence
// start; clip_id lets owners detect state carried across clip boundaries.
struct ConvLstmState {
  FeatureGrid hidden;
  FeatureGrid cell;
  int64_t clip_id = -1;
};

// Convolutional LSTM cell. The four gates are computed by one same-padding
// convolution over the channel concatenation of input and previous hidden,
// so the hidden grid keeps the input's spatial size. Gate order [i, f, g, o];
// forget-gate bias initialized to 1.
class ConvLstmCell {
 public:
  ConvLstmCell() = default;
  ConvLstmCell(int rows, int cols, int in_channels, int hidden_channels,
               int kernel, bool trainable, Rng& rng);

  ConvLstmState initial_state(int64_t clip_id) const;

  // One recurrent update. Returns the new hidden grid (also stored in
  // state). In a training pass the step is cached for backward_through_time.
  FeatureGrid step(const FeatureGrid& x, ConvLstmState& state,
                   const Pass& pass);

  // Backward for the most recent cached step. dh is the total gradient on
  // this step's hidden output (loss path plus recurrent path); dc_next is
  // the recurrent cell-state gradient flowing back from step t+1 (zeros for
  // the last step). Outputs the gradient wrt x and overwrites dh_prev /
  // dc_prev with the recurrent gradients for step t-1.
  FeatureGrid backward_step(const FeatureGrid& dh, const FeatureGrid& dc_next,
                            FeatureGrid* dh_prev, FeatureGrid* dc_prev);

  void visit_params(const std::string& prefix, const ParamVisitor& visit);
  void clear_cache() { cache_.clear(); }
  size_t cached_steps() const { return cache_.size(); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int in_channels() const { return cin_; }
  int hidden_channels() const { return ch_; }

  Parameter weight;  // (k, k, cin + ch, 4 * ch)
  Parameter bias;    // (4 * ch)

 private:
  struct StepCache {
    FeatureGrid z;      // concat(x, h_prev)
    FeatureGrid gates;  // post-activation (i, f, g, o), 4*ch channels
    FeatureGrid c_prev;
    FeatureGrid tanh_c;
  };

  FeatureGrid gate_preact(const FeatureGrid& z) const;
  void gate_conv_backward(const FeatureGrid& z, const FeatureGrid& da,
                          FeatureGrid* dz);

  int rows_ = 0, cols_ = 0, cin_ = 0, ch_ = 0, kernel_ = 0;
  std::vector<StepCache> cache_;
};

}  // namespace pfd::nn
