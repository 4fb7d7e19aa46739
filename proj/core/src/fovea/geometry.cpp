#include <algorithm>

#include "pfdrive/fovea/fovea.hpp"

namespace pfd::fovea {

namespace {

// Clamps a patch-long span centered at center into [0, limit).
std::pair<int, int> clamped_span(int center, int patch, int limit) {
  int lo = center - patch / 2;
  lo = std::clamp(lo, 0, limit - patch);
  return {lo, lo + patch};
}

}  // namespace

CellGeometry cell_to_geometry(Cell cell, const FrameGeometry& geom) {
  geom.validate();
  if (cell.i < 0 || cell.i >= kGridRows || cell.j < 0 || cell.j >= kGridCols)
    throw ConfigError("cell_to_geometry: cell off the 9x16 grid");

  int pitch = geom.pitch();
  int cr = cell.i * pitch + pitch / 2;
  int cc = cell.j * pitch + pitch / 2;

  CellGeometry out;
  auto [top, bottom] = clamped_span(cr, geom.patch_px, geom.frame_h);
  auto [left, right] = clamped_span(cc, geom.patch_px, geom.frame_w);
  out.rect = {top, left, bottom, right};
  out.corner = {std::clamp(cell.i - 1, 0, kGridRows - 3),
                std::clamp(cell.j - 1, 0, kGridCols - 3)};
  return out;
}

FoveaPlacement select_foveae(const AttentionMap* map,
                             const FoveaSelectionConfig& config,
                             const FrameGeometry& geom, nn::Rng& rng) {
  config.validate();
  geom.validate();

  std::vector<Cell> cells;
  switch (config.policy) {
    case FoveaPolicy::kNone:
      return {};
    case FoveaPolicy::kRandom:
      cells = random_fovea_cells(config, rng);
      break;
    case FoveaPolicy::kCentral:
      cells = central_fovea_cells();
      break;
    case FoveaPolicy::kTopK:
      if (map == nullptr)
        throw ConfigError("top-k fovea policy needs an attention map");
      cells = topk_fovea_cells(*map, config.count);
      break;
    case FoveaPolicy::kSampled:
      if (map == nullptr)
        throw ConfigError("sampled fovea policy needs an attention map");
      cells = sample_fovea_cells(*map, config, rng);
      break;
  }

  FoveaPlacement placement;
  placement.cells = cells;
  for (Cell c : cells) {
    CellGeometry g = cell_to_geometry(c, geom);
    placement.rects.push_back(g.rect);
    placement.corners.push_back(g.corner);
  }
  return placement;
}

}  // namespace pfd::fovea
