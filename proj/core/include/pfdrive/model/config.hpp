#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/errors.hpp"
#include "pfdrive/fovea/fovea.hpp"
#include "pfdrive/nn/layers.hpp"

namespace pfd::model {

enum class PlannerVariant { kCombined, kDual, kPeripheryOnly };

PlannerVariant planner_variant_from_string(const std::string& s);
std::string to_string(PlannerVariant v);

// Frame preprocessing: peripheral downsample size, fovea crop/resize sizes
// and the per-channel mean offsets (applied in RGB order).
struct PreprocConfig {
  int periph_h = 72;
  int periph_w = 128;
  int patch_px = 240;  // square crop around the fovea cell center
  int patch_in = 185;  // foveal encoder input after bilinear resize
  std::array<double, 3> channel_mean = {123.68, 116.79, 103.939};

  void validate() const;
};

// Layer plan of the visual front end. The backbone chain is the frozen
// feature extractor shared by the peripheral encoder and the attention
// module; the head chains are trainable conv blocks (batch norm + relu +
// dropout). validate() runs the full shape audit and throws ShapeError with
// a layer-by-layer trace on any inconsistency.
struct ArchConfig {
  std::string preset = "paper";  // informational label
  int frame_h = 720;
  int frame_w = 1280;
  PreprocConfig preproc;
  double dropout = 0.2;

  std::vector<nn::Conv2dSpec> backbone;             // frozen, input 3 ch
  std::vector<nn::Conv2dSpec> periph_head;          // -> (3, 7, C) pre-resample
  std::vector<nn::Conv2dSpec> fovea_backbone;       // trainable, input 3 ch
  std::vector<nn::Conv2dSpec> fovea_head_combined;  // -> (3, 3, C)
  std::vector<nn::Conv2dSpec> fovea_head_dual;      // -> (14, 14, C)

  // Feature channel count C shared by the peripheral and foveal outputs.
  int feature_channels() const;
  // Peripheral chain output size before the resample to 9x16.
  std::pair<int, int> periph_pre_shape() const;
  int cell_pitch() const { return frame_h / fovea::kGridRows; }
  fovea::FrameGeometry frame_geometry() const {
    return fovea::FrameGeometry{frame_h, frame_w, preproc.patch_px};
  }

  // Full-scale plan: 720x1280 frames, 72x128 periphery, 11x11/5x5 backbone,
  // 240->185 foveae. The acceptance shape audit pins its chain to
  // 72x128 -> 3x7xC -> 9x16xC and 185x185 -> 3x3xC / 14x14xC.
  static ArchConfig paper();
  // Quarter-scale plan (180x320 frames, 18x32 periphery, 60->46 foveae)
  // with the same grid contracts; cheap enough for CPU training runs.
  static ArchConfig toy();
  // Toy geometry with slim channels, dropout disabled; sized so full-model
  // finite-difference sweeps stay fast.
  static ArchConfig grad_check();
  static ArchConfig preset_by_name(const std::string& name);

  // Shape audit. Recomputes every chain and throws ShapeError carrying the
  // whole trace if any layer mismatches, any spatial size collapses, the
  // three output chains disagree on channels, or the foveal chains miss
  // their exact (3, 3) / (14, 14) targets.
  void validate() const;
  // The audit trace as text (also emitted inside audit failures).
  std::string shape_trace() const;

  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
};

// Everything needed to build one driving model.
struct ModelConfig {
  PlannerVariant variant = PlannerVariant::kCombined;
  ArchConfig arch;
  fovea::FoveaSelectionConfig fovea;
  int hidden_channels = 16;  // planner recurrent-conv hidden channels
  int lstm_kernel = 3;
  std::vector<int> fc_widths = {64, 32, 16, 1};
  int horizon = 10;  // frames ahead (1 s at 10 Hz)
  uint64_t seed = 1;
  // The speed head emits offset + scale * z so a zero-initialized network
  // starts near cruising speed instead of zero.
  double output_offset = 24.0;
  double output_scale = 8.0;

  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  // Model preset by arch name with matched planner widths.
  static ModelConfig preset(const std::string& name);
};

// Attention predictor: frozen backbone + its own head convs (peripheral
// head specs, fresh weights), recurrent-conv over the 9x16 grid, 1x1 conv
// to logits, softmax.
struct AttentionConfig {
  ArchConfig arch;
  int hidden_channels = 8;
  int lstm_kernel = 3;
  uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static AttentionConfig from_json(const nlohmann::json& j);
  static AttentionConfig preset(const std::string& name);
};

}  // namespace pfd::model
