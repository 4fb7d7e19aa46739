#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/harness/metrics.hpp"
#include "pfdrive/model/planner.hpp"
#include "pfdrive/world/dataset.hpp"

namespace pfd::harness {

// Frames [begin, end) of one clip, evaluated with a freshly reset recurrent
// state. Targets are confined to the segment: the last horizon frames of
// every segment predict without a target.
struct Segment {
  int clip = 0;
  int begin = 0;
  int end = 0;

  int frames() const { return end - begin; }
};

// Greedy segmentation: maximal-length pieces first, the remainder last
// (a 400-frame clip at 300 becomes 300 + 100). max_frames 0 means one
// segment per clip; otherwise it must exceed the given horizon so at least
// the first piece can carry targets.
std::vector<Segment> segment_clip(int clip, int frames, int max_frames,
                                  int horizon);

// Deterministic split by clip index: the first train_frac of clips, the
// next val_frac, the rest for test.
struct ClipSplit {
  std::vector<int> train, val, test;

  nlohmann::json to_json() const;
  static ClipSplit from_json(const nlohmann::json& j);
};
ClipSplit split_clips(int clip_count, double train_frac, double val_frac);

// On-demand frame accessor for one clip.
std::function<nn::FeatureGrid(int)> clip_frames(const world::DatasetReader& data,
                                                int clip);
std::vector<double> clip_speeds(const world::DatasetReader& data, int clip);
bool pedestrian_tagged(const world::FrameLabel& label);

// Aligned per-target vectors for one evaluated clip. Input frame index t
// predicts the speed at t + horizon; predictions are clamped to >= 0.
struct VideoEval {
  int clip = 0;
  std::vector<int> frames;
  std::vector<double> pred;
  std::vector<double> target;
};

struct SubgroupStats {
  int64_t frames = 0;
  double mae = 0.0;
};

struct SegmentCurvePoint {
  int seconds = 0;
  double mae = 0.0;
};

struct FoveaDiagnostics {
  bool present = false;          // any foveae were placed
  bool map_based = false;        // the policy consulted the gaze predictor
  double mean_likelihood = 0.0;  // attention mass on the chosen cells
  double mean_overlap = 0.0;     // adjacent in-segment placements
};

struct EvalReport {
  std::string model;
  nlohmann::json model_config;
  int segment_frames = 0;  // 0 = whole clips
  int frame_hz = 0;
  std::vector<int> clips;
  Metrics metrics;
  std::vector<VideoEval> videos;
  double speed_filter_kmh = 36.0;
  SubgroupStats pedestrian, other;
  std::vector<SegmentCurvePoint> segment_curve;
  FoveaDiagnostics fovea;
  double flops_per_frame = 0.0;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::string label;
  int segment_frames = 0;                       // 0 = whole clips
  std::vector<int> curve_seconds = {2, 10, 20, 30};
  double speed_filter_kmh = 36.0;
};

// Runs the model over the given clips (resetting state per segment),
// pools the metrics, splits the pedestrian subgroup on the input frame's
// tag with the speed filter applied to the input frame's speed, and sweeps
// the segment-length curve. Rejects an empty target set.
EvalReport evaluate_model(model::DrivingModel& model,
                          const world::DatasetReader& data,
                          const std::vector<int>& clips,
                          const EvalOptions& opts = {});

}  // namespace pfd::harness
