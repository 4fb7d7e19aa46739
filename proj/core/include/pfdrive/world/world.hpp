#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/attention/attention_map.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::world {

// Inclusive range for seeded uniform draws of scenario parameters.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Scenario and rendering parameters for the synthetic driving world.
// Distances are meters, times seconds, speeds m/s internally; labels use km/h.
struct WorldConfig {
  int scale = 4;  // 1 = 720x1280, 4 = 180x320
  int clips = 40;
  double clip_seconds = 30.0;
  int frame_hz = 10;
  std::uint64_t seed = 7;

  double cruise_kmh = 30.0;

  int lead_count = 1;  // 0 or 1
  int ped_count = 4;
  Range lead_slow_kmh{14.0, 20.0};
  Range lead_cruise_s{8.0, 15.0};
  Range lead_slow_s{3.0, 5.0};
  Range ped_lat_m{8.0, 12.0};
  Range ped_trigger_m{14.0, 19.0};
  Range ped_episode_s{2.0, 4.0};
  double ped_crossing_prob = 0.55;
  Range ped_spacing_m{50.0, 90.0};
  double warn_s = 0.8;  // cue lead time before an episode's kinematics start

  // Speed controller.
  double gap_gain = 0.55;
  double standoff_m = 5.0;
  double headway_s = 1.0;
  double gain_p = 1.2;
  double accel_max = 2.2;
  double decel_max = 4.0;
  double ped_stop_m = 4.0;
  double ped_slow_m = 24.0;

  // Cue glyph: striped square panel, screen-fixed size, snapped to a 10 px
  // grid so a 10x downsample always averages one ON and one OFF stripe tap.
  int cue_panel_px = 20;
  int cue_period_px = 5;
  int cue_duty_on = 2;

  int dither = 4;  // max per-channel amplitude of seeded pixel noise

  // Gaze mixture weights: .lo applies when the glyph is off, .hi when on.
  double gaze_sigma_cells = 0.7;
  double gaze_w_vp = 0.15;
  Range gaze_w_lead{0.25, 0.75};
  Range gaze_w_ped{0.12, 0.85};

  int frame_h() const { return 720 / scale; }
  int frame_w() const { return 1280 / scale; }
  double dt() const { return 1.0 / frame_hz; }
  int frames_per_clip() const;
  double cruise_ms() const { return cruise_kmh / 3.6; }

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static WorldConfig from_json(const nlohmann::json& j);
};

// Pinhole camera looking down the road. row/col are unclamped doubles.
struct CameraModel {
  int h = 0;
  int w = 0;
  double focal = 0.0;
  double horizon = 0.0;
  double cam_height = 1.4;

  static CameraModel for_frame(int h, int w);

  // dist forward in meters, height above ground, lat left(-)/right(+).
  double row_of(double dist, double height) const {
    return horizon + focal * (cam_height - height) / dist;
  }
  double col_of(double dist, double lat) const {
    return 0.5 * w + focal * lat / dist;
  }
};

// Per-frame agent observations logged with each frame; enough to replay the
// speed controller exactly.
struct LeadLog {
  double gap_m = 0.0;
  double speed_ms = 0.0;
  bool glyph_on = false;
};

struct PedLog {
  double fwd_m = 0.0;  // ego-relative forward distance
  double lat_m = 0.0;
  bool glyph_on = false;
  bool crossing = false;
  bool active = false;  // crossing episode currently constrains speed
};

struct SceneState {
  double ego_v_ms = 0.0;
  std::optional<LeadLog> lead;
  std::vector<PedLog> peds;
};

// Control law, exposed so tests can replay logged scenes:
// v_follow = max(0, lead_v + gap_gain*(gap - (standoff + headway*v)))
// v_ped    = cruise * clamp((fwd - ped_stop) / (ped_slow - ped_stop), 0, 1)
// v_tgt    = min(cruise, v_follow, v_ped over active peds)
// v'       = max(0, v + clamp(gain_p*(v_tgt - v), -decel_max, accel_max)*dt)
double target_speed(const WorldConfig& cfg, const SceneState& s);
double control_step(const WorldConfig& cfg, const SceneState& s, double dt);

// Tag of the binding constraint: "pedestrian", "lead", or none (cruise).
std::vector<std::string> frame_tags(const WorldConfig& cfg, const SceneState& s);

struct FrameLabel {
  double speed_kmh = 0.0;
  std::vector<double> gaze;  // 144 cell probabilities, row-major
  std::vector<std::string> tags;
  SceneState scene;
};

struct VideoClip {
  std::string name;
  std::uint64_t seed = 0;
  int frame_h = 0;
  int frame_w = 0;
  std::vector<std::vector<std::uint8_t>> frames;  // h*w*3 each, row-major RGB
  std::vector<FrameLabel> labels;
};

// Glyph panel placement, shared by the renderer and the gaze ground truth.
struct PanelPlace {
  int left = 0;
  int top = 0;  // both snapped to the 10 px grid
};
std::optional<PanelPlace> agent_panel(const WorldConfig& cfg, const CameraModel& cam,
                                      double fwd_m, double lat_m, double top_height_m);

struct GazeComponent {
  double row_cells = 0.0;
  double col_cells = 0.0;
  double weight = 0.0;
};

// Gaussian-mixture gaze density over the 9x16 grid, normalized to sum 1.
std::vector<double> gaze_from_components(const std::vector<GazeComponent>& comps,
                                         double sigma_cells);
std::vector<GazeComponent> gaze_components(const WorldConfig& cfg, const CameraModel& cam,
                                           const SceneState& s);

// Renders one frame into out (frame_h*frame_w*3, RGB); dither_rng supplies the
// per-pixel noise stream and is consumed identically for any scene content.
void render_frame(const WorldConfig& cfg, const CameraModel& cam, const SceneState& s,
                  double ego_s, nn::Rng& dither_rng, std::vector<std::uint8_t>& out);

VideoClip generate_clip(const WorldConfig& cfg, std::uint64_t clip_seed,
                        const std::string& name);

nlohmann::json scene_to_json(const SceneState& s);
SceneState scene_from_json(const nlohmann::json& j);

}  // namespace pfd::world
