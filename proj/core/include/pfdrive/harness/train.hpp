#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "pfdrive/harness/evaluate.hpp"
#include "pfdrive/model/planner.hpp"
#include "pfdrive/world/dataset.hpp"

namespace pfd::harness {

struct TrainConfig {
  double lr = 0.02;
  int epochs = 4;
  int segment_frames = 50;
  double train_frac = 0.7;
  double val_frac = 0.1;
  uint64_t seed = 1;

  void validate(int horizon) const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  ClipSplit split;
  double initial_val_loss = 0.0;
  std::vector<double> train_loss;  // mean segment MSE per epoch
  std::vector<double> val_loss;    // whole-clip MSE on the val share

  nlohmann::json to_json() const;
};

// Whole-clip MSE (km/h squared) over the given clips, eval mode.
double validation_loss(model::DrivingModel& model,
                       const world::DatasetReader& data,
                       const std::vector<int>& clips);

// Trains the planner and encoder heads with Adam, one segment per update,
// segment order reshuffled each epoch. The frozen backbone and the installed
// gaze predictor are asserted unchanged afterwards. Gaze-driven policies
// without an installed predictor are rejected up front. Deterministic for a
// fixed config and dataset.
TrainResult train_driving_model(model::DrivingModel& model,
                                const world::DatasetReader& data,
                                const TrainConfig& cfg);

}  // namespace pfd::harness
