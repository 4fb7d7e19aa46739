#include <algorithm>
#include <set>

#include "pfdrive/fovea/fovea.hpp"

namespace pfd::fovea {

double fovea_likelihood(const AttentionMap& map,
                        const std::vector<Cell>& cells) {
  std::set<Cell> distinct(cells.begin(), cells.end());
  double mass = 0.0;
  for (Cell c : distinct) {
    if (c.i < 0 || c.i >= kGridRows || c.j < 0 || c.j >= kGridCols)
      throw ConfigError("fovea_likelihood: cell off the grid");
    mass += map.q(c.i, c.j);
  }
  return mass;
}

namespace {

bool in_union(const std::vector<PixelRect>& rects, int64_t y, int64_t x) {
  for (const PixelRect& r : rects)
    if (y >= r.top && y < r.bottom && x >= r.left && x < r.right) return true;
  return false;
}

}  // namespace

double fovea_overlap(const FoveaPlacement& a, const FoveaPlacement& b) {
  if (a.rects.empty()) return 0.0;
  // Exact areas by coordinate compression: between consecutive distinct
  // edge coordinates, union membership is constant.
  std::vector<int> xs, ys;
  for (const auto* p : {&a, &b}) {
    for (const PixelRect& r : p->rects) {
      xs.push_back(r.left);
      xs.push_back(r.right);
      ys.push_back(r.top);
      ys.push_back(r.bottom);
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());

  int64_t area_a = 0, area_ab = 0;
  for (size_t yi = 0; yi + 1 < ys.size(); ++yi) {
    for (size_t xi = 0; xi + 1 < xs.size(); ++xi) {
      int64_t cell_area = static_cast<int64_t>(ys[yi + 1] - ys[yi]) *
                          (xs[xi + 1] - xs[xi]);
      if (!in_union(a.rects, ys[yi], xs[xi])) continue;
      area_a += cell_area;
      if (in_union(b.rects, ys[yi], xs[xi])) area_ab += cell_area;
    }
  }
  return static_cast<double>(area_ab) / static_cast<double>(area_a);
}

nlohmann::json placement_log_entry(int64_t frame_index,
                                   const FoveaPlacement& placement,
                                   double likelihood) {
  nlohmann::json cells = nlohmann::json::array();
  for (Cell c : placement.cells) cells.push_back({c.i, c.j});
  nlohmann::json rects = nlohmann::json::array();
  for (const PixelRect& r : placement.rects)
    rects.push_back({r.top, r.left, r.bottom, r.right});
  nlohmann::json corners = nlohmann::json::array();
  for (Cell c : placement.corners) corners.push_back({c.i, c.j});
  return {{"frame", frame_index},
          {"cells", cells},
          {"rects", rects},
          {"corners", corners},
          {"likelihood", likelihood}};
}

}  // namespace pfd::fovea
