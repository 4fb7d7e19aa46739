#pragma once

#include <cmath>
#include <cstdint>

#include "pfdrive/errors.hpp"
#include "pfdrive/nn/feature_grid.hpp"

namespace pfd::attention {

// The gaze grid: 9x16 cells over the frame, one attention mass per cell.
inline constexpr int kGridRows = 9;
inline constexpr int kGridCols = 16;
inline constexpr int kGridCells = kGridRows * kGridCols;

// Predicted (or ground-truth) human-attention distribution for one frame.
struct AttentionMap {
  nn::FeatureGrid grid;  // 9 x 16 x 1, entries >= 0, sum 1
  int64_t frame_index = -1;

  AttentionMap() : grid(kGridRows, kGridCols, 1) {}

  double q(int i, int j) const { return grid.at(i, j, 0); }
  double& q(int i, int j) { return grid.at(i, j, 0); }

  double sum() const {
    double s = 0.0;
    for (double v : grid.values) s += v;
    return s;
  }

  void validate() const {
    nn::require_shape(grid, kGridRows, kGridCols, 1, "attention map");
    for (double v : grid.values)
      if (!(v >= 0.0))
        throw ConfigError("attention map: negative or non-finite entry");
    if (std::abs(sum() - 1.0) > 1e-6)
      throw ConfigError("attention map: mass does not sum to 1");
  }

  static AttentionMap uniform(int64_t frame_index = -1) {
    AttentionMap m;
    m.grid.fill(1.0 / kGridCells);
    m.frame_index = frame_index;
    return m;
  }
};

}  // namespace pfd::attention
