#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/model/config.hpp"
#include "pfdrive/nn/layers.hpp"

namespace pfd::harness {

// One named stage of the per-frame forward pass. Foveal stages are already
// multiplied by the configured fovea count.
struct FlopsItem {
  std::string name;
  double flops = 0.0;
};

struct FlopsReport {
  std::vector<FlopsItem> items;
  double total = 0.0;

  void add(const std::string& name, double flops);
  // Exact-name lookup; throws ConfigError when absent.
  double at(const std::string& name) const;
  nlohmann::json to_json() const;
};

// Counting conventions (one multiply-accumulate = 2 FLOPs):
//   conv (valid padding, no bias): 2 * kh * kw * cin * cout * oh * ow
//   dense (no bias):               2 * in * out
//   bilinear resample:             8 per output value
//   batch norm (eval) 2 / elem; relu 1 / elem; dropout 0 (eval)
//   mean subtraction and positional-encoding add: 1 / elem
//   recurrent conv: gate conv (same padding, cin+hidden -> 4*hidden)
//     plus 24 per hidden cell (gate nonlinearities and state algebra)
//   softmax: 5 per entry
//   patch insertion / channel concat: 0 (data movement)
//   output head: 2 (offset + scale)
double conv_flops(const nn::Conv2dSpec& s, int in_h, int in_w);
double dense_flops(int in, int out);
double resample_flops(int out_h, int out_w, int channels);
double convlstm_flops(int rows, int cols, int cin, int hidden, int kernel);
double softmax_flops(int entries);

// Per-frame forward cost, stage by stage. For gaze-driven fovea policies the
// attention predictor is included with the shared backbone counted once;
// pass the installed predictor's config, or omit it to use the preset that
// matches the arch preset name.
FlopsReport compute_flops(const model::ModelConfig& cfg);
FlopsReport compute_flops(
    const model::ModelConfig& cfg,
    const std::optional<model::AttentionConfig>& attention);

struct UniResResult {
  model::ModelConfig config;  // periphery-only, fovea policy none
  double flops = 0.0;
  double target = 0.0;
  int periph_h = 0;
  int periph_w = 0;
};

// Largest periphery-only input resolution (integer sizes at 9:16 aspect up
// to rounding) whose per-frame FLOPs stay <= target. Throws ConfigError when
// the best candidate misses the target by more than 2%. The one-argument
// form matches the reference model's own FLOPs.
UniResResult build_uniresolution_baseline(const model::ModelConfig& reference);
UniResResult build_uniresolution_baseline(const model::ModelConfig& reference,
                                          double target_flops);

}  // namespace pfd::harness
