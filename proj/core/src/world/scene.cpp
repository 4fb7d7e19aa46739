#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/world/world.hpp"

namespace pfd::world {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("world config: " + what);
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  return Range{a.at(0).get<double>(), a.at(1).get<double>()};
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

int WorldConfig::frames_per_clip() const {
  return static_cast<int>(std::lround(clip_seconds * frame_hz));
}

void WorldConfig::validate() const {
  require(scale >= 1 && 720 % scale == 0, "scale must divide 720");
  // Height multiple of 90 and width of 160 keep the 9x16 cell grid and the
  // exact 10x peripheral downsample integer at every scale.
  require(frame_h() % 90 == 0, "frame height must be a multiple of 90");
  require(frame_w() % 160 == 0, "frame width must be a multiple of 160");
  require(clips >= 1, "clips must be positive");
  require(frame_hz >= 1, "frame_hz must be positive");
  require(clip_seconds * frame_hz >= 1.0, "clip must contain at least one frame");
  require(cruise_kmh > 0.0, "cruise speed must be positive");
  require(lead_count == 0 || lead_count == 1, "lead_count must be 0 or 1");
  require(ped_count >= 0, "ped_count must be non-negative");
  require(ped_crossing_prob >= 0.0 && ped_crossing_prob <= 1.0,
          "ped_crossing_prob must be in [0, 1]");
  require(warn_s >= 0.0, "warn_s must be non-negative");
  require(gap_gain > 0.0 && gain_p > 0.0, "controller gains must be positive");
  require(accel_max > 0.0 && decel_max > 0.0, "accel limits must be positive");
  require(ped_slow_m > ped_stop_m && ped_stop_m > 0.0,
          "need ped_slow_m > ped_stop_m > 0");
  require(cue_panel_px >= 20 && cue_panel_px % 10 == 0,
          "cue panel must be a multiple of 10 px, at least 20");
  require(cue_period_px >= 2 && cue_period_px < 10 && 10 % cue_period_px == 0,
          "cue stripe period must divide 10 and be in [2, 10)");
  require(cue_duty_on >= 1 && cue_duty_on < cue_period_px,
          "cue duty must leave both on and off stripes");
  require(dither >= 0 && dither <= 10, "dither amplitude must be in [0, 10]");
  require(gaze_sigma_cells > 0.0, "gaze sigma must be positive");
  require(gaze_w_vp > 0.0, "vanishing-point gaze weight must be positive");
  for (const Range* r : {&lead_slow_kmh, &lead_cruise_s, &lead_slow_s, &ped_lat_m,
                         &ped_trigger_m, &ped_episode_s, &ped_spacing_m}) {
    require(r->lo > 0.0 && r->hi >= r->lo, "scenario ranges must be positive and ordered");
  }
}

nlohmann::json WorldConfig::to_json() const {
  return nlohmann::json{
      {"scale", scale},
      {"clips", clips},
      {"clip_seconds", clip_seconds},
      {"frame_hz", frame_hz},
      {"seed", seed},
      {"cruise_kmh", cruise_kmh},
      {"lead_count", lead_count},
      {"ped_count", ped_count},
      {"lead_slow_kmh", range_json(lead_slow_kmh)},
      {"lead_cruise_s", range_json(lead_cruise_s)},
      {"lead_slow_s", range_json(lead_slow_s)},
      {"ped_lat_m", range_json(ped_lat_m)},
      {"ped_trigger_m", range_json(ped_trigger_m)},
      {"ped_episode_s", range_json(ped_episode_s)},
      {"ped_crossing_prob", ped_crossing_prob},
      {"ped_spacing_m", range_json(ped_spacing_m)},
      {"warn_s", warn_s},
      {"gap_gain", gap_gain},
      {"standoff_m", standoff_m},
      {"headway_s", headway_s},
      {"gain_p", gain_p},
      {"accel_max", accel_max},
      {"decel_max", decel_max},
      {"ped_stop_m", ped_stop_m},
      {"ped_slow_m", ped_slow_m},
      {"cue_panel_px", cue_panel_px},
      {"cue_period_px", cue_period_px},
      {"cue_duty_on", cue_duty_on},
      {"dither", dither},
      {"gaze_sigma_cells", gaze_sigma_cells},
      {"gaze_w_vp", gaze_w_vp},
      {"gaze_w_lead", range_json(gaze_w_lead)},
      {"gaze_w_ped", range_json(gaze_w_ped)},
  };
}

WorldConfig WorldConfig::from_json(const nlohmann::json& j) {
  WorldConfig c;
  c.scale = get_or(j, "scale", c.scale);
  c.clips = get_or(j, "clips", c.clips);
  c.clip_seconds = get_or(j, "clip_seconds", c.clip_seconds);
  c.frame_hz = get_or(j, "frame_hz", c.frame_hz);
  c.seed = get_or(j, "seed", c.seed);
  c.cruise_kmh = get_or(j, "cruise_kmh", c.cruise_kmh);
  c.lead_count = get_or(j, "lead_count", c.lead_count);
  c.ped_count = get_or(j, "ped_count", c.ped_count);
  c.lead_slow_kmh = range_from(j, "lead_slow_kmh", c.lead_slow_kmh);
  c.lead_cruise_s = range_from(j, "lead_cruise_s", c.lead_cruise_s);
  c.lead_slow_s = range_from(j, "lead_slow_s", c.lead_slow_s);
  c.ped_lat_m = range_from(j, "ped_lat_m", c.ped_lat_m);
  c.ped_trigger_m = range_from(j, "ped_trigger_m", c.ped_trigger_m);
  c.ped_episode_s = range_from(j, "ped_episode_s", c.ped_episode_s);
  c.ped_crossing_prob = get_or(j, "ped_crossing_prob", c.ped_crossing_prob);
  c.ped_spacing_m = range_from(j, "ped_spacing_m", c.ped_spacing_m);
  c.warn_s = get_or(j, "warn_s", c.warn_s);
  c.gap_gain = get_or(j, "gap_gain", c.gap_gain);
  c.standoff_m = get_or(j, "standoff_m", c.standoff_m);
  c.headway_s = get_or(j, "headway_s", c.headway_s);
  c.gain_p = get_or(j, "gain_p", c.gain_p);
  c.accel_max = get_or(j, "accel_max", c.accel_max);
  c.decel_max = get_or(j, "decel_max", c.decel_max);
  c.ped_stop_m = get_or(j, "ped_stop_m", c.ped_stop_m);
  c.ped_slow_m = get_or(j, "ped_slow_m", c.ped_slow_m);
  c.cue_panel_px = get_or(j, "cue_panel_px", c.cue_panel_px);
  c.cue_period_px = get_or(j, "cue_period_px", c.cue_period_px);
  c.cue_duty_on = get_or(j, "cue_duty_on", c.cue_duty_on);
  c.dither = get_or(j, "dither", c.dither);
  c.gaze_sigma_cells = get_or(j, "gaze_sigma_cells", c.gaze_sigma_cells);
  c.gaze_w_vp = get_or(j, "gaze_w_vp", c.gaze_w_vp);
  c.gaze_w_lead = range_from(j, "gaze_w_lead", c.gaze_w_lead);
  c.gaze_w_ped = range_from(j, "gaze_w_ped", c.gaze_w_ped);
  c.validate();
  return c;
}

CameraModel CameraModel::for_frame(int h, int w) {
  CameraModel cam;
  cam.h = h;
  cam.w = w;
  cam.focal = 1.1 * h;
  cam.horizon = 0.42 * h;
  return cam;
}

double target_speed(const WorldConfig& cfg, const SceneState& s) {
  double v_tgt = cfg.cruise_ms();
  if (s.lead) {
    double desired = cfg.standoff_m + cfg.headway_s * s.ego_v_ms;
    double v_follow =
        std::max(0.0, s.lead->speed_ms + cfg.gap_gain * (s.lead->gap_m - desired));
    v_tgt = std::min(v_tgt, v_follow);
  }
  for (const PedLog& p : s.peds) {
    if (!p.active) continue;
    double v_ped = cfg.cruise_ms() *
                   clamp01((p.fwd_m - cfg.ped_stop_m) / (cfg.ped_slow_m - cfg.ped_stop_m));
    v_tgt = std::min(v_tgt, v_ped);
  }
  return v_tgt;
}

double control_step(const WorldConfig& cfg, const SceneState& s, double dt) {
  double v_tgt = target_speed(cfg, s);
  double accel = std::clamp(cfg.gain_p * (v_tgt - s.ego_v_ms), -cfg.decel_max, cfg.accel_max);
  return std::max(0.0, s.ego_v_ms + accel * dt);
}

std::vector<std::string> frame_tags(const WorldConfig& cfg, const SceneState& s) {
  double cruise = cfg.cruise_ms();
  double v_follow = cruise;
  if (s.lead) {
    double desired = cfg.standoff_m + cfg.headway_s * s.ego_v_ms;
    v_follow = std::max(0.0, s.lead->speed_ms + cfg.gap_gain * (s.lead->gap_m - desired));
  }
  double v_ped = cruise;
  for (const PedLog& p : s.peds) {
    if (!p.active) continue;
    v_ped = std::min(v_ped, cfg.cruise_ms() * clamp01((p.fwd_m - cfg.ped_stop_m) /
                                                      (cfg.ped_slow_m - cfg.ped_stop_m)));
  }
  // Tag the binding constraint; pedestrian wins ties so critical frames are
  // never missed by the subgroup split.
  if (v_ped < cruise - 1e-9 && v_ped <= v_follow + 1e-9) return {"pedestrian"};
  if (v_follow < cruise - 1e-9) return {"lead"};
  return {};
}

std::optional<PanelPlace> agent_panel(const WorldConfig& cfg, const CameraModel& cam,
                                      double fwd_m, double lat_m, double top_height_m) {
  if (fwd_m < 2.0 || fwd_m > 70.0) return std::nullopt;
  double center_col = cam.col_of(fwd_m, lat_m);
  if (center_col < -40.0 || center_col > cam.w + 40.0) return std::nullopt;

  int panel = cfg.cue_panel_px;
  auto snap10 = [](double x) { return static_cast<int>(std::llround(x / 10.0)) * 10; };
  // Sit just above the agent's head/roof; keep clear of the speed strip.
  double top_row = cam.row_of(fwd_m, top_height_m);
  int top = std::clamp(snap10(top_row - panel - 4.0), 0, cam.h - 20 - panel);
  int left = std::clamp(snap10(center_col - 0.5 * panel), 0, cam.w - panel);
  return PanelPlace{left, top};
}

std::vector<double> gaze_from_components(const std::vector<GazeComponent>& comps,
                                         double sigma_cells) {
  using attention::kGridCols;
  using attention::kGridRows;
  if (comps.empty()) throw ConfigError("gaze mixture needs at least one component");
  std::vector<double> g(attention::kGridCells, 0.0);
  double inv_two_sigma2 = 1.0 / (2.0 * sigma_cells * sigma_cells);
  for (int i = 0; i < kGridRows; ++i) {
    for (int j = 0; j < kGridCols; ++j) {
      double acc = 0.0;
      for (const GazeComponent& c : comps) {
        double dr = (i + 0.5) - c.row_cells;
        double dc = (j + 0.5) - c.col_cells;
        acc += c.weight * std::exp(-(dr * dr + dc * dc) * inv_two_sigma2);
      }
      g[i * kGridCols + j] = acc;
    }
  }
  double sum = 0.0;
  for (double v : g) sum += v;
  if (!(sum > 0.0)) throw ConfigError("gaze mixture collapsed to zero mass");
  for (double& v : g) v /= sum;
  return g;
}

std::vector<GazeComponent> gaze_components(const WorldConfig& cfg, const CameraModel& cam,
                                           const SceneState& s) {
  double cell_h = static_cast<double>(cam.h) / attention::kGridRows;
  double cell_w = static_cast<double>(cam.w) / attention::kGridCols;
  std::vector<GazeComponent> comps;
  comps.push_back({cam.horizon / cell_h, 0.5 * cam.w / cell_w, cfg.gaze_w_vp});
  auto panel_component = [&](const PanelPlace& p, double weight) {
    double half = 0.5 * cfg.cue_panel_px;
    comps.push_back({(p.top + half) / cell_h, (p.left + half) / cell_w, weight});
  };
  if (s.lead) {
    if (auto p = agent_panel(cfg, cam, s.lead->gap_m, 0.0, 1.5)) {
      panel_component(*p, s.lead->glyph_on ? cfg.gaze_w_lead.hi : cfg.gaze_w_lead.lo);
    }
  }
  for (const PedLog& ped : s.peds) {
    if (ped.fwd_m > 60.0) continue;
    if (auto p = agent_panel(cfg, cam, ped.fwd_m, ped.lat_m, 1.7)) {
      panel_component(*p, ped.glyph_on ? cfg.gaze_w_ped.hi : cfg.gaze_w_ped.lo);
    }
  }
  return comps;
}

nlohmann::json scene_to_json(const SceneState& s) {
  nlohmann::json j;
  j["ego_v"] = s.ego_v_ms;
  if (s.lead) {
    j["lead"] = {{"gap", s.lead->gap_m}, {"v", s.lead->speed_ms}, {"glyph", s.lead->glyph_on}};
  } else {
    j["lead"] = nullptr;
  }
  nlohmann::json peds = nlohmann::json::array();
  for (const PedLog& p : s.peds) {
    peds.push_back({{"fwd", p.fwd_m},
                    {"lat", p.lat_m},
                    {"glyph", p.glyph_on},
                    {"crossing", p.crossing},
                    {"active", p.active}});
  }
  j["peds"] = std::move(peds);
  return j;
}

SceneState scene_from_json(const nlohmann::json& j) {
  SceneState s;
  s.ego_v_ms = j.at("ego_v").get<double>();
  if (!j.at("lead").is_null()) {
    const auto& l = j.at("lead");
    s.lead = LeadLog{l.at("gap").get<double>(), l.at("v").get<double>(),
                     l.at("glyph").get<bool>()};
  }
  for (const auto& p : j.at("peds")) {
    s.peds.push_back(PedLog{p.at("fwd").get<double>(), p.at("lat").get<double>(),
                            p.at("glyph").get<bool>(), p.at("crossing").get<bool>(),
                            p.at("active").get<bool>()});
  }
  return s;
}

}  // namespace pfd::world
