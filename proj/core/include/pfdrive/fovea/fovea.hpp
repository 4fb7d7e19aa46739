#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/attention/attention_map.hpp"
#include "pfdrive/errors.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::fovea {

using attention::AttentionMap;
using attention::kGridCells;
using attention::kGridCols;
using attention::kGridRows;

struct Cell {
  int i = 0;  // row on the 9x16 grid
  int j = 0;  // column

  bool operator==(const Cell&) const = default;
  bool operator<(const Cell& o) const {
    return i != o.i ? i < o.i : j < o.j;  // row-major
  }
};

// Half-open pixel rectangle [top, bottom) x [left, right).
struct PixelRect {
  int top = 0, left = 0, bottom = 0, right = 0;

  bool operator==(const PixelRect&) const = default;
  int64_t area() const {
    return static_cast<int64_t>(bottom - top) * (right - left);
  }
};

// Frame pixel geometry. The gaze grid is always 9x16; the cell pitch in
// pixels follows the frame size (80 px at full scale, 20 px at toy scale).
struct FrameGeometry {
  int frame_h = 720;
  int frame_w = 1280;
  int patch_px = 240;

  int pitch() const { return frame_h / kGridRows; }

  void validate() const {
    if (frame_h <= 0 || frame_w <= 0)
      throw ConfigError("frame geometry: non-positive frame size");
    if (frame_h % kGridRows != 0 || frame_w % kGridCols != 0 ||
        frame_h / kGridRows != frame_w / kGridCols)
      throw ConfigError(
          "frame geometry: frame must divide into a uniform 9x16 cell grid");
    if (patch_px <= 0 || patch_px > frame_h || patch_px > frame_w)
      throw ConfigError("frame geometry: patch size must fit in the frame");
    if (patch_px % 2 != 0 || pitch() % 2 != 0)
      throw ConfigError("frame geometry: patch size and cell pitch must be even");
  }
};

enum class FoveaPolicy { kNone, kRandom, kCentral, kTopK, kSampled };

FoveaPolicy fovea_policy_from_string(const std::string& s);
std::string to_string(FoveaPolicy p);

struct FoveaSelectionConfig {
  FoveaPolicy policy = FoveaPolicy::kSampled;
  int count = 2;
  double temperature = 1.0;
  uint64_t seed = 0;

  void validate() const {
    if (count < 1) throw ConfigError("fovea config: count must be >= 1");
    if (count > kGridRows * kGridCols)
      throw ConfigError("fovea config: count exceeds grid size");
    if (!(temperature > 0.0))
      throw ConfigError("fovea config: temperature must be > 0");
    if (policy == FoveaPolicy::kCentral && count != 2)
      throw ConfigError("fovea config: central policy is defined for 2 foveae");
  }
};

// Selected fovea locations for one frame: grid cells, their pixel patch
// rectangles and the top-left grid corners where the 3x3 feature patches
// are inserted. Parallel arrays, one entry per fovea (duplicates possible
// under the sampled policy).
struct FoveaPlacement {
  std::vector<Cell> cells;
  std::vector<PixelRect> rects;
  std::vector<Cell> corners;

  size_t size() const { return cells.size(); }
};

// ---------------------------------------------------------------------------
// Selection policies.

// Temperature-modulated sampling: n independent draws with replacement from
// p_i = exp(log q_i / T) / sum_j exp(log q_j / T). Zero-mass cells get
// probability zero (the T-limit of the formula); an all-zero map is invalid.
std::vector<Cell> sample_fovea_cells(const AttentionMap& map,
                                     const FoveaSelectionConfig& config,
                                     nn::Rng& rng);

// The n distinct cells with the largest attention mass, ties broken in
// row-major order.
std::vector<Cell> topk_fovea_cells(const AttentionMap& map, int n);

std::vector<Cell> random_fovea_cells(const FoveaSelectionConfig& config,
                                     nn::Rng& rng);

// The two fixed cells whose patches tile the central patch x 2*patch region
// (exact when patch = 3 * pitch, which holds at both supported scales).
std::vector<Cell> central_fovea_cells();

// The temperature-sampling distribution itself (144 entries, row-major).
// Exposed for the analytic tests and the likelihood diagnostics.
std::vector<double> sampling_distribution(const AttentionMap& map,
                                          double temperature);

// ---------------------------------------------------------------------------
// Geometry.

struct CellGeometry {
  PixelRect rect;
  Cell corner;
};

// Pixel patch rectangle centered on the cell center, clamped inside the
// frame, plus the clamped (i-1, j-1) insertion corner for the 3x3 feature
// patch.
CellGeometry cell_to_geometry(Cell cell, const FrameGeometry& geom);

// Runs the configured policy and attaches geometry. map may be null for the
// policies that ignore it (none, random, central). Policy none returns an
// empty placement.
FoveaPlacement select_foveae(const AttentionMap* map,
                             const FoveaSelectionConfig& config,
                             const FrameGeometry& geom, nn::Rng& rng);

// ---------------------------------------------------------------------------
// Diagnostics.

// Summed attention mass over the distinct selected cells.
double fovea_likelihood(const AttentionMap& map, const std::vector<Cell>& cells);

// Pixel area of union(rects of a) intersected with union(rects of b),
// divided by the area of union(rects of a). Zero if a has no rectangles.
double fovea_overlap(const FoveaPlacement& a, const FoveaPlacement& b);

// One placement-log line (JSONL): frame index, cells, rectangles,
// likelihood under the map that produced the placement.
nlohmann::json placement_log_entry(int64_t frame_index,
                                   const FoveaPlacement& placement,
                                   double likelihood);

}  // namespace pfd::fovea
