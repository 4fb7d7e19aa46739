#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/attention/attention_map.hpp"
#include "pfdrive/model/config.hpp"
#include "pfdrive/model/encoders.hpp"
#include "pfdrive/nn/checkpoint.hpp"
#include "pfdrive/nn/convlstm.hpp"
#include "pfdrive/world/dataset.hpp"

namespace pfd::attention {

// Gaze predictor: frozen shared backbone -> trainable conv head (peripheral
// head specs, fresh weights) -> resample to 9x16 -> recurrent conv ->
// 1x1 conv to logits -> softmax over the 144 cells. Trained separately on
// gaze ground truth, then frozen while driving models train.
class AttentionModel {
 public:
  AttentionModel() = default;
  explicit AttentionModel(const model::AttentionConfig& cfg);

  // Frozen feature pass on a preprocessed low-res frame; never cached.
  nn::FeatureGrid backbone_forward(const nn::FeatureGrid& low);

  nn::ConvLstmState initial_state(int64_t clip_id) const {
    return lstm_.initial_state(clip_id);
  }

  // One recurrent step. state must belong to clip_id (reset at clip start);
  // a mismatch means state leaked across clips and raises StateError.
  AttentionMap predict(const nn::FeatureGrid& backbone_out, int64_t clip_id,
                       nn::ConvLstmState& state, const nn::Pass& pass,
                       int64_t frame_index = -1);

  // Eval-mode maps for a whole clip (fresh state, no caching).
  std::vector<AttentionMap> predict_clip(
      const std::vector<nn::FeatureGrid>& lows, int64_t clip_id);

  // Backward for the most recent cached predict (LIFO). dlogits is the
  // gradient wrt the 9x16x1 pre-softmax logits; dh/dc carry the recurrent
  // gradients between steps (pass zero grids at the segment end).
  void backward_step(const nn::FeatureGrid& dlogits, nn::FeatureGrid* dh,
                     nn::FeatureGrid* dc);

  void visit_params(const nn::ParamVisitor& visit);
  void clear_cache();

  const model::AttentionConfig& config() const { return cfg_; }
  int feature_channels() const { return channels_; }
  uint64_t backbone_hash();
  uint64_t params_hash();

  // Checkpoint with the config embedded in metadata, so load_checkpoint
  // rebuilds the exact model.
  void save_checkpoint(const std::string& path,
                       const nlohmann::json& extra_metadata = {});
  static AttentionModel load_checkpoint(const std::string& path);

 private:
  model::AttentionConfig cfg_;
  model::ConvStack backbone_;
  model::ConvStack head_;
  nn::ConvLstmCell lstm_;
  nn::Conv2d out_;
  int pre_h_ = 0, pre_w_ = 0, channels_ = 0;
};

struct AttentionTrainConfig {
  double lr = 0.01;
  int epochs = 12;
  int segment_frames = 100;  // 10 s at 10 Hz; state resets per segment
  uint64_t seed = 1;

  nlohmann::json to_json() const;
  static AttentionTrainConfig from_json(const nlohmann::json& j);
};

struct AttentionTrainResult {
  std::vector<double> epoch_loss;  // mean per-frame KL over the epoch
};

// Trains the head/recurrent/output parameters on the gaze labels of the
// given clips (one Adam update per segment, full BPTT). The backbone stays
// frozen; rejects clips without usable gaze maps.
AttentionTrainResult train_attention(AttentionModel& model,
                                     const world::DatasetReader& data,
                                     const std::vector<int>& clips,
                                     const AttentionTrainConfig& cfg);

// Mean per-frame KL(truth || predicted) in eval mode over whole clips.
double evaluate_attention_kl(AttentionModel& model,
                             const world::DatasetReader& data,
                             const std::vector<int>& clips);

// Mean per-frame KL(truth || uniform) over the same clips.
double uniform_baseline_kl(const world::DatasetReader& data,
                           const std::vector<int>& clips);

}  // namespace pfd::attention
