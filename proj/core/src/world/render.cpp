#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/world/world.hpp"

namespace pfd::world {

namespace {

struct Color {
  int r, g, b;
};

constexpr Color kSkyTop{135, 160, 200};
constexpr Color kSkyHorizon{190, 200, 215};
constexpr Color kRoad{105, 105, 108};
constexpr Color kGround{95, 130, 85};
constexpr Color kLane{235, 235, 235};
constexpr Color kPole{90, 75, 60};
constexpr Color kCar{150, 30, 30};
constexpr Color kPed{30, 60, 160};
constexpr Color kPanelOn{240, 220, 60};
constexpr Color kPanelOff{45, 45, 45};
constexpr Color kSpeedBar{230, 230, 230};
constexpr Color kSpeedBg{20, 20, 20};

constexpr int kSpeedStripPx = 20;
constexpr double kRoadHalfWidth = 5.5;
constexpr double kLaneLineLat = 1.85;
constexpr double kLaneLineHalfWidth = 0.2;
constexpr double kPoleSpacing = 30.0;
constexpr double kPoleLat = 6.5;

class Canvas {
 public:
  Canvas(std::vector<std::uint8_t>& buf, int h, int w) : buf_(buf), h_(h), w_(w) {
    buf_.assign(static_cast<std::size_t>(h) * w * 3, 0);
  }

  void set(int r, int c, Color col) {
    std::size_t at = (static_cast<std::size_t>(r) * w_ + c) * 3;
    buf_[at] = static_cast<std::uint8_t>(col.r);
    buf_[at + 1] = static_cast<std::uint8_t>(col.g);
    buf_[at + 2] = static_cast<std::uint8_t>(col.b);
  }

  void fill_rect(double top, double bottom, double left, double right, Color col) {
    int r0 = std::clamp(static_cast<int>(std::lround(top)), 0, h_);
    int r1 = std::clamp(static_cast<int>(std::lround(bottom)), 0, h_);
    int c0 = std::clamp(static_cast<int>(std::lround(left)), 0, w_);
    int c1 = std::clamp(static_cast<int>(std::lround(right)), 0, w_);
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) set(r, c, col);
    }
  }

 private:
  std::vector<std::uint8_t>& buf_;
  int h_;
  int w_;
};

int lerp_channel(int a, int b, double t) {
  return static_cast<int>(std::lround(a + (b - a) * t));
}

}  // namespace

void render_frame(const WorldConfig& cfg, const CameraModel& cam, const SceneState& s,
                  double ego_s, nn::Rng& dither_rng, std::vector<std::uint8_t>& out) {
  const int h = cam.h;
  const int w = cam.w;
  Canvas canvas(out, h, w);

  // Sky and ground, per pixel through the inverse projection.
  for (int r = 0; r < h; ++r) {
    double rc = r + 0.5;
    if (rc <= cam.horizon + 0.5) {
      double t = std::clamp(rc / cam.horizon, 0.0, 1.0);
      Color sky{lerp_channel(kSkyTop.r, kSkyHorizon.r, t),
                lerp_channel(kSkyTop.g, kSkyHorizon.g, t),
                lerp_channel(kSkyTop.b, kSkyHorizon.b, t)};
      for (int c = 0; c < w; ++c) canvas.set(r, c, sky);
      continue;
    }
    double dist = cam.focal * cam.cam_height / (rc - cam.horizon);
    for (int c = 0; c < w; ++c) {
      double lat = (c + 0.5 - 0.5 * w) * dist / cam.focal;
      if (std::abs(lat) > kRoadHalfWidth) {
        canvas.set(r, c, kGround);
        continue;
      }
      bool on_line = std::abs(std::abs(lat) - kLaneLineLat) <= kLaneLineHalfWidth &&
                     std::fmod(ego_s + dist, 8.0) < 3.0;
      canvas.set(r, c, on_line ? kLane : kRoad);
    }
  }

  // Poles and agents, far to near so closer boxes paint over farther ones.
  struct Drawable {
    double dist;
    double lat_lo, lat_hi, z_top;
    Color color;
  };
  std::vector<Drawable> boxes;
  double first_pole = std::ceil((ego_s + 2.0) / kPoleSpacing) * kPoleSpacing;
  for (double p = first_pole; p <= ego_s + 120.0; p += kPoleSpacing) {
    double d = p - ego_s;
    boxes.push_back({d, -kPoleLat - 0.15, -kPoleLat + 0.15, 4.0, kPole});
    boxes.push_back({d, kPoleLat - 0.15, kPoleLat + 0.15, 4.0, kPole});
  }
  if (s.lead && s.lead->gap_m >= 2.0) {
    boxes.push_back({s.lead->gap_m, -0.95, 0.95, 1.5, kCar});
  }
  for (const PedLog& p : s.peds) {
    if (p.fwd_m >= 2.0) boxes.push_back({p.fwd_m, p.lat_m - 0.25, p.lat_m + 0.25, 1.7, kPed});
  }
  std::sort(boxes.begin(), boxes.end(),
            [](const Drawable& a, const Drawable& b) { return a.dist > b.dist; });
  for (const Drawable& b : boxes) {
    canvas.fill_rect(cam.row_of(b.dist, b.z_top), cam.row_of(b.dist, 0.0),
                     cam.col_of(b.dist, b.lat_lo), cam.col_of(b.dist, b.lat_hi), b.color);
  }

  // Speed strip: bar width proportional to current speed, 60 km/h full scale.
  double v_kmh = s.ego_v_ms * 3.6;
  int bar_w = std::clamp(static_cast<int>(std::lround(w * v_kmh / 60.0)), 0, w);
  for (int r = h - kSpeedStripPx; r < h; ++r) {
    for (int c = 0; c < w; ++c) canvas.set(r, c, c < bar_w ? kSpeedBar : kSpeedBg);
  }

  // Cue panels last so they are never occluded. Vertical stripes signal an
  // alert, horizontal is neutral; both have the same on/off duty so their
  // block means match.
  auto draw_panel = [&](const PanelPlace& place, bool vertical) {
    for (int r = place.top; r < place.top + cfg.cue_panel_px; ++r) {
      for (int c = place.left; c < place.left + cfg.cue_panel_px; ++c) {
        int phase = (vertical ? c - place.left : r - place.top) % cfg.cue_period_px;
        canvas.set(r, c, phase < cfg.cue_duty_on ? kPanelOn : kPanelOff);
      }
    }
  };
  if (s.lead) {
    if (auto p = agent_panel(cfg, cam, s.lead->gap_m, 0.0, 1.5)) {
      draw_panel(*p, s.lead->glyph_on);
    }
  }
  for (const PedLog& ped : s.peds) {
    if (auto p = agent_panel(cfg, cam, ped.fwd_m, ped.lat_m, 1.7)) {
      draw_panel(*p, ped.glyph_on);
    }
  }

  // Seeded pixel noise, drawn in raster order for every pixel so the stream
  // never depends on scene content.
  if (cfg.dither > 0) {
    int span = 2 * cfg.dither + 1;
    for (std::size_t i = 0; i < out.size(); ++i) {
      int v = out[i] + dither_rng.uniform_int(span) - cfg.dither;
      out[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
}

}  // namespace pfd::world
