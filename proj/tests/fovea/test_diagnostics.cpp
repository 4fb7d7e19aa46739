#include <doctest.h>

#include <set>
#include <vector>

#include "pfdrive/fovea/fovea.hpp"

using namespace pfd::fovea;
using pfd::nn::Rng;

namespace {

const FrameGeometry kPaper{720, 1280, 240};

FoveaPlacement placement_for(const std::vector<Cell>& cells,
                             const FrameGeometry& geom) {
  FoveaPlacement p;
  p.cells = cells;
  for (Cell c : cells) {
    CellGeometry g = cell_to_geometry(c, geom);
    p.rects.push_back(g.rect);
    p.corners.push_back(g.corner);
  }
  return p;
}

// Brute-force pixel count oracle for the overlap ratio.
double overlap_oracle(const FoveaPlacement& a, const FoveaPlacement& b,
                      const FrameGeometry& geom) {
  auto covered = [](const FoveaPlacement& p, int y, int x) {
    for (const PixelRect& r : p.rects)
      if (y >= r.top && y < r.bottom && x >= r.left && x < r.right)
        return true;
    return false;
  };
  int64_t area_a = 0, area_ab = 0;
  for (int y = 0; y < geom.frame_h; ++y)
    for (int x = 0; x < geom.frame_w; ++x)
      if (covered(a, y, x)) {
        ++area_a;
        if (covered(b, y, x)) ++area_ab;
      }
  return area_a == 0 ? 0.0
                     : static_cast<double>(area_ab) / static_cast<double>(area_a);
}

}  // namespace

TEST_CASE("likelihood of the two leading cells") {
  // Masses 0.3 and 0.18 on the top-2 cells; the rest spread evenly.
  AttentionMap m;
  double rest = (1.0 - 0.3 - 0.18) / (kGridCells - 2);
  m.grid.fill(rest);
  m.q(4, 7) = 0.3;
  m.q(4, 8) = 0.18;
  auto cells = topk_fovea_cells(m, 2);
  CHECK(fovea_likelihood(m, cells) == doctest::Approx(0.48).epsilon(1e-12));
}

TEST_CASE("likelihood on a uniform map") {
  AttentionMap m = AttentionMap::uniform();
  CHECK(fovea_likelihood(m, {{0, 0}, {5, 5}}) ==
        doctest::Approx(2.0 / 144.0).epsilon(1e-12));
}

TEST_CASE("duplicate cells count once") {
  AttentionMap m = AttentionMap::uniform();
  CHECK(fovea_likelihood(m, {{3, 3}, {3, 3}}) ==
        doctest::Approx(1.0 / 144.0).epsilon(1e-12));
}

TEST_CASE("likelihood matches direct summation on random maps") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(400 + seed);
    AttentionMap m;
    double total = 0.0;
    for (double& v : m.grid.values) {
      v = rng.uniform();
      total += v;
    }
    for (double& v : m.grid.values) v /= total;
    std::vector<Cell> cells;
    int n = 1 + rng.uniform_int(4);
    for (int k = 0; k < n; ++k)
      cells.push_back({rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)});
    std::set<Cell> distinct(cells.begin(), cells.end());
    double want = 0.0;
    for (Cell c : distinct) want += m.q(c.i, c.j);
    CHECK(fovea_likelihood(m, cells) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("identical placements overlap fully") {
  FoveaPlacement p = placement_for({{2, 3}, {6, 10}}, kPaper);
  CHECK(fovea_overlap(p, p) == doctest::Approx(1.0));
}

TEST_CASE("disjoint placements do not overlap") {
  FoveaPlacement a = placement_for({{0, 0}}, kPaper);
  FoveaPlacement b = placement_for({{8, 15}}, kPaper);
  CHECK(fovea_overlap(a, b) == doctest::Approx(0.0));
}

TEST_CASE("half-shifted patch overlaps by one half") {
  // 240-px patches whose centers differ by 120 px horizontally: cell (4,7)
  // spans cols 480..720 and a hand-built rect shifted 120 px spans 600..840.
  FoveaPlacement a = placement_for({{4, 7}}, kPaper);
  FoveaPlacement b = a;
  b.rects[0] = {240, 600, 480, 840};
  CHECK(fovea_overlap(a, b) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(overlap_oracle(a, b, kPaper) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("empty first placement gives zero overlap") {
  FoveaPlacement empty;
  FoveaPlacement b = placement_for({{4, 7}}, kPaper);
  CHECK(fovea_overlap(empty, b) == 0.0);
}

TEST_CASE("overlap matches the rasterization oracle on random placements") {
  const FrameGeometry toy{180, 320, 60};
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(500 + seed);
    auto random_cells = [&](int n) {
      std::vector<Cell> cells;
      for (int k = 0; k < n; ++k)
        cells.push_back(
            {rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)});
      return cells;
    };
    FoveaPlacement a = placement_for(random_cells(1 + rng.uniform_int(3)), toy);
    FoveaPlacement b = placement_for(random_cells(1 + rng.uniform_int(3)), toy);
    CHECK(fovea_overlap(a, b) ==
          doctest::Approx(overlap_oracle(a, b, toy)).epsilon(1e-12));
  }
}

TEST_CASE("overlap is bounded in [0, 1]") {
  const FrameGeometry toy{180, 320, 60};
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(600 + seed);
    FoveaPlacement a = placement_for(
        {{rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)},
         {rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)}},
        toy);
    FoveaPlacement b = placement_for(
        {{rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)},
         {rng.uniform_int(kGridRows), rng.uniform_int(kGridCols)}},
        toy);
    double v = fovea_overlap(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("placement log entry carries the audit fields") {
  AttentionMap m = AttentionMap::uniform();
  FoveaPlacement p = placement_for({{4, 7}, {0, 0}}, kPaper);
  double like = fovea_likelihood(m, p.cells);
  nlohmann::json entry = placement_log_entry(17, p, like);
  CHECK(entry["frame"] == 17);
  CHECK(entry["cells"].size() == 2);
  CHECK(entry["cells"][0][0] == 4);
  CHECK(entry["cells"][0][1] == 7);
  CHECK(entry["rects"][0] == nlohmann::json({240, 480, 480, 720}));
  CHECK(entry["corners"][1] == nlohmann::json({0, 0}));
  CHECK(entry["likelihood"] == doctest::Approx(2.0 / 144.0));
}
