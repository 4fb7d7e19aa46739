#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "pfdrive/errors.hpp"
#include "pfdrive/world/world.hpp"

using namespace pfd;
using namespace pfd::world;

namespace {

WorldConfig toy_config() {
  WorldConfig cfg;
  cfg.scale = 4;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("world config geometry and validation") {
  WorldConfig cfg = toy_config();
  CHECK(cfg.frame_h() == 180);
  CHECK(cfg.frame_w() == 320);
  CHECK(cfg.frames_per_clip() == 300);

  WorldConfig paper = cfg;
  paper.scale = 1;
  CHECK_NOTHROW(paper.validate());
  CHECK(paper.frame_h() == 720);
  CHECK(paper.frame_w() == 1280);

  WorldConfig bad = cfg;
  bad.scale = 3;  // 240x... breaks the 10x downsample alignment
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.scale = 7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.cue_period_px = 4;  // does not divide 10
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.cue_duty_on = 5;  // no off stripes left
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.cue_panel_px = 25;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.ped_slow_m = bad.ped_stop_m;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.lead_count = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("world config json round trip") {
  WorldConfig cfg = toy_config();
  cfg.cruise_kmh = 28.5;
  cfg.ped_count = 3;
  cfg.gaze_w_ped = {0.1, 0.9};
  cfg.seed = 123456789;
  WorldConfig back = WorldConfig::from_json(cfg.to_json());
  CHECK(back.cruise_kmh == cfg.cruise_kmh);
  CHECK(back.ped_count == cfg.ped_count);
  CHECK(back.gaze_w_ped.lo == cfg.gaze_w_ped.lo);
  CHECK(back.gaze_w_ped.hi == cfg.gaze_w_ped.hi);
  CHECK(back.seed == cfg.seed);
  CHECK(back.to_json() == cfg.to_json());
}

TEST_CASE("control law hand cases") {
  WorldConfig cfg = toy_config();
  double cruise = cfg.cruise_ms();
  double dt = cfg.dt();

  SceneState s;
  s.ego_v_ms = cruise;
  CHECK(target_speed(cfg, s) == doctest::Approx(cruise).epsilon(1e-12));
  CHECK(control_step(cfg, s, dt) == doctest::Approx(cruise).epsilon(1e-12));

  // Follow rule: lead at 5 m/s, gap 10 m, ego 8 m/s.
  // desired = 5 + 1.0*8 = 13, v_follow = 5 + 0.55*(10-13) = 3.35.
  s.ego_v_ms = 8.0;
  s.lead = LeadLog{10.0, 5.0, false};
  CHECK(target_speed(cfg, s) == doctest::Approx(3.35).epsilon(1e-12));
  // accel = clamp(1.2*(3.35-8), -4, 2.2) = -4 -> v' = 8 - 0.4
  CHECK(control_step(cfg, s, dt) == doctest::Approx(7.6).epsilon(1e-12));

  // Pedestrian ramp: midpoint of [stop, slow] gives half cruise.
  s = SceneState{};
  s.ego_v_ms = cruise;
  PedLog ped;
  ped.fwd_m = 0.5 * (cfg.ped_stop_m + cfg.ped_slow_m);
  ped.active = true;
  s.peds.push_back(ped);
  CHECK(target_speed(cfg, s) == doctest::Approx(0.5 * cruise).epsilon(1e-12));

  // Inside the stop radius the target collapses to zero; speed never goes
  // negative even from a crawl.
  s.peds[0].fwd_m = cfg.ped_stop_m - 1.0;
  CHECK(target_speed(cfg, s) == 0.0);
  s.ego_v_ms = 0.05;
  CHECK(control_step(cfg, s, dt) >= 0.0);

  // Inactive pedestrians do not constrain speed.
  s.ego_v_ms = cruise;
  s.peds[0].active = false;
  CHECK(target_speed(cfg, s) == doctest::Approx(cruise).epsilon(1e-12));
}

TEST_CASE("frame tags reflect the binding constraint") {
  WorldConfig cfg = toy_config();
  SceneState s;
  s.ego_v_ms = cfg.cruise_ms();
  CHECK(frame_tags(cfg, s).empty());

  s.lead = LeadLog{6.0, 3.0, true};
  auto tags = frame_tags(cfg, s);
  REQUIRE(tags.size() == 1);
  CHECK(tags[0] == "lead");

  s.lead = LeadLog{25.0, 7.0, false};  // comfortable gap, follow rule slack
  PedLog ped;
  ped.fwd_m = 5.0;  // near stop distance -> much slower target than lead rule
  ped.active = true;
  s.peds.push_back(ped);
  tags = frame_tags(cfg, s);
  REQUIRE(tags.size() == 1);
  CHECK(tags[0] == "pedestrian");

  s.lead.reset();
  s.peds[0].fwd_m = 30.0;  // beyond slow radius: ramp saturates at cruise
  CHECK(frame_tags(cfg, s).empty());
}

TEST_CASE("panel placement snaps to the 10 px grid and stays in frame") {
  WorldConfig cfg = toy_config();
  CameraModel cam = CameraModel::for_frame(cfg.frame_h(), cfg.frame_w());
  nn::Rng rng(31);
  int seen = 0;
  for (int i = 0; i < 500; ++i) {
    double fwd = rng.uniform(1.0, 90.0);
    double lat = rng.uniform(-14.0, 14.0);
    auto p = agent_panel(cfg, cam, fwd, lat, 1.7);
    if (!p) continue;
    ++seen;
    CHECK(p->left % 10 == 0);
    CHECK(p->top % 10 == 0);
    CHECK(p->left >= 0);
    CHECK(p->left + cfg.cue_panel_px <= cfg.frame_w());
    CHECK(p->top >= 0);
    CHECK(p->top + cfg.cue_panel_px <= cfg.frame_h() - 20);
  }
  CHECK(seen > 100);
  CHECK_FALSE(agent_panel(cfg, cam, 1.0, 0.0, 1.5).has_value());
  CHECK_FALSE(agent_panel(cfg, cam, 200.0, 0.0, 1.5).has_value());
}

TEST_CASE("gaze mixture is a valid distribution peaked at its component") {
  std::vector<GazeComponent> comps{{4.5, 7.5, 1.0}};
  auto g = gaze_from_components(comps, 0.7);
  REQUIRE(g.size() == 144);
  double sum = 0.0;
  for (double v : g) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  auto it = std::max_element(g.begin(), g.end());
  int at = static_cast<int>(it - g.begin());
  CHECK(at / 16 == 4);
  CHECK(at % 16 == 7);

  CHECK_THROWS_AS(gaze_from_components({}, 0.7), ConfigError);
}

TEST_CASE("mirrored pedestrians give a mirror-symmetric gaze map") {
  WorldConfig cfg = toy_config();
  CameraModel cam = CameraModel::for_frame(cfg.frame_h(), cfg.frame_w());
  // d and l chosen so the projected panel centers land exactly on the snap
  // grid: col = 160 +/- 198*2/9.9 = 120 and 200.
  SceneState s;
  s.ego_v_ms = cfg.cruise_ms();
  PedLog left;
  left.fwd_m = 9.9;
  left.lat_m = -2.0;
  left.glyph_on = true;
  left.crossing = true;
  PedLog right = left;
  right.lat_m = 2.0;
  s.peds = {left, right};

  auto comps = gaze_components(cfg, cam, s);
  REQUIRE(comps.size() == 3);  // vanishing point + both pedestrians
  auto g = gaze_from_components(comps, cfg.gaze_sigma_cells);
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 16; ++j) {
      CHECK(g[i * 16 + j] == doctest::Approx(g[i * 16 + (15 - j)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("scene json round trip") {
  SceneState s;
  s.ego_v_ms = 7.25;
  s.lead = LeadLog{12.5, 6.0, true};
  PedLog p;
  p.fwd_m = 20.0;
  p.lat_m = -9.5;
  p.glyph_on = true;
  p.crossing = true;
  p.active = false;
  s.peds.push_back(p);

  SceneState back = scene_from_json(scene_to_json(s));
  CHECK(back.ego_v_ms == s.ego_v_ms);
  REQUIRE(back.lead.has_value());
  CHECK(back.lead->gap_m == s.lead->gap_m);
  CHECK(back.lead->speed_ms == s.lead->speed_ms);
  CHECK(back.lead->glyph_on == s.lead->glyph_on);
  REQUIRE(back.peds.size() == 1);
  CHECK(back.peds[0].fwd_m == p.fwd_m);
  CHECK(back.peds[0].lat_m == p.lat_m);
  CHECK(back.peds[0].glyph_on == p.glyph_on);
  CHECK(back.peds[0].crossing == p.crossing);
  CHECK(back.peds[0].active == p.active);
}
