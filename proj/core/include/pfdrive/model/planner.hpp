#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/attention/attention_model.hpp"
#include "pfdrive/fovea/fovea.hpp"
#include "pfdrive/model/config.hpp"
#include "pfdrive/model/encoders.hpp"
#include "pfdrive/nn/checkpoint.hpp"
#include "pfdrive/nn/convlstm.hpp"
#include "pfdrive/nn/layers.hpp"

namespace pfd::model {

// ---------------------------------------------------------------------------
// Feature fusion.

// Writes each 3x3xC patch into a zero-initialized 9x16xC grid at its
// top-left corner; where patches overlap, the elementwise maximum is kept.
// Corners must lie in [0, 6] x [0, 13]. Patches may be empty (policy none),
// which yields the zero grid.
nn::FeatureGrid insert_fovea_features(const std::vector<nn::FeatureGrid>& patches,
                                      const std::vector<fovea::Cell>& corners,
                                      int channels);

// Gradient of insert_fovea_features wrt each patch. At every fused value the
// gradient flows to the patches attaining the maximum; exact ties split it
// equally (the central-difference limit). Values outside any patch footprint
// drop their gradient.
std::vector<nn::FeatureGrid> insert_fovea_backward(
    const nn::FeatureGrid& dfused, const std::vector<nn::FeatureGrid>& patches,
    const std::vector<fovea::Cell>& corners);

// Channel concatenation, peripheral block first: (9,16,C) + (9,16,C) ->
// (9,16,2C). Spatial or channel mismatch is rejected.
nn::FeatureGrid concat_features(const nn::FeatureGrid& periph,
                                const nn::FeatureGrid& foveal);
// Splits the concatenated gradient back into its two blocks.
void concat_backward(const nn::FeatureGrid& dcombined, int periph_channels,
                     nn::FeatureGrid* dperiph, nn::FeatureGrid* dfoveal);

// Sinusoidal position code for a gaze-grid cell. k must be even; the first
// k/2 entries encode the row, the last k/2 the column, each half as
// (sin, cos) pairs with frequencies geometric from 1 down to 1/10000.
// Cell (0, 0) maps to zeros in the sin slots and ones in the cos slots.
std::vector<double> positional_encoding(fovea::Cell cell, int k);

// Adds positional_encoding(cell, channels) to every spatial position of a
// patch in place (the dual planner's location channel).
void add_positional_encoding(nn::FeatureGrid& patch, fovea::Cell cell);

// ---------------------------------------------------------------------------
// Driving model.

// Recurrent state for one clip. Only the grids used by the configured
// variant are allocated.
struct PlannerState {
  int64_t clip_id = -1;
  int frame = 0;  // next frame index within the clip
  nn::ConvLstmState main;        // combined / periphery-only stream
  nn::ConvLstmState dual_periph;
  nn::ConvLstmState dual_fovea;
  nn::ConvLstmState attention;   // gaze predictor recurrence
};

// Optional per-frame diagnostics: the fovea placement, and when the policy
// consulted the gaze predictor, the map and the placement's likelihood.
struct StepDiag {
  fovea::FoveaPlacement placement;
  bool has_map = false;
  attention::AttentionMap map;
  double likelihood = 0.0;
};

// The full periphery + fovea speed predictor. One instance owns the frozen
// backbones, the trainable encoder heads, the recurrent planner and the
// regression stack; sampled/top-k policies additionally hold a frozen copy
// of a trained gaze predictor (set_attention).
class DrivingModel {
 public:
  explicit DrivingModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Installs a trained gaze predictor (copied, then frozen). Required
  // before stepping with the top-k or sampled policies; the architectures
  // must match.
  void set_attention(const attention::AttentionModel& module);
  bool has_attention() const { return attention_.has_value(); }
  // The installed gaze predictor, or null when none is installed.
  const attention::AttentionModel* attention_module() const {
    return attention_ ? &*attention_ : nullptr;
  }

  PlannerState initial_state(int64_t clip_id) const;

  // One frame: encode, place foveae, fuse, recurrent update, regress.
  // Returns the predicted speed (km/h) for frame state.frame + horizon.
  // state must belong to clip_id; a mismatch raises StateError.
  double step(const nn::FeatureGrid& frame, int64_t clip_id,
              PlannerState& state, const nn::Pass& pass,
              StepDiag* diag = nullptr);

  // Eval-mode predictions over a whole clip; frame_at(t) supplies the raw
  // frame grid. Clips shorter than horizon + 1 are rejected; the final
  // horizon frames still produce predictions (without targets).
  std::vector<double> forward_clip(
      const std::function<nn::FeatureGrid(int)>& frame_at, int frames,
      int64_t clip_id, std::vector<StepDiag>* diags = nullptr);

  // One BPTT pass over frames [begin, end) of a clip: forward in train mode,
  // mean-squared-error over the frames whose target (t + horizon) lies
  // inside the clip, full reverse unroll accumulating parameter gradients.
  // Returns the segment loss; the caller owns the optimizer step.
  double train_segment(const std::function<nn::FeatureGrid(int)>& frame_at,
                       const std::vector<double>& speeds_kmh, int begin,
                       int end, int64_t clip_id, uint64_t pass_seed);

  void visit_params(const nn::ParamVisitor& visit);
  void clear_cache();

  // Hash over everything that must not move during training: the shared
  // frozen backbone, the foveal backbone and the installed gaze predictor.
  uint64_t frozen_hash();
  uint64_t params_hash();

  void save_checkpoint(const std::string& path,
                       const nlohmann::json& extra_metadata = {});
  static DrivingModel load_checkpoint(const std::string& path);

 private:
  bool needs_map() const;
  bool uses_foveae() const;
  double planner_forward(const nn::FeatureGrid& xp,
                         std::vector<nn::FeatureGrid> patches,
                         const fovea::FoveaPlacement& placement,
                         PlannerState& state, const nn::Pass& pass);
  void planner_backward(double dz, nn::FeatureGrid* dh_main,
                        nn::FeatureGrid* dc_main, nn::FeatureGrid* dh_dp,
                        nn::FeatureGrid* dc_dp, nn::FeatureGrid* dh_df,
                        nn::FeatureGrid* dc_df, size_t trace_index);

  ModelConfig cfg_;
  fovea::FrameGeometry geom_;
  int channels_ = 0;
  PeripheralEncoder periph_;
  std::optional<FovealEncoder> fovea_enc_;
  std::optional<attention::AttentionModel> attention_;
  nn::ConvLstmCell lstm_main_;
  nn::ConvLstmCell lstm_dual_periph_;
  nn::ConvLstmCell lstm_dual_fovea_;
  std::vector<nn::Dense> fc_;

  // Per-step record kept during training passes for the fusion backward.
  struct StepTrace {
    std::vector<nn::FeatureGrid> patches;  // encoded foveal outputs
    std::vector<fovea::Cell> corners;
    std::vector<fovea::Cell> cells;
  };
  std::vector<StepTrace> trace_;
};

}  // namespace pfd::model
