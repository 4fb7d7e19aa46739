#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/world/world.hpp"

namespace pfd::world {

namespace {

// Lead vehicle's own speed tracking limits (the ego controller has its own).
constexpr double kLeadGain = 2.5;
constexpr double kLeadAccel = 2.0;
constexpr double kLeadDecel = 4.5;

struct SlowPhase {
  double start_s = 0.0;
  double end_s = 0.0;
  double speed_ms = 0.0;
};

struct PedScenario {
  double road_pos_m = 0.0;  // absolute position along the road
  double lat0_m = 0.0;
  bool crossing = false;
  double trigger_m = 0.0;
  double episode_s = 0.0;
  // runtime
  bool warned = false;  // cue latched on, warn_s ahead of the trigger
  bool triggered = false;
  double trigger_time_s = 0.0;
};

double draw(const Range& r, nn::Rng& rng) { return rng.uniform(r.lo, r.hi); }

std::vector<SlowPhase> lead_schedule(const WorldConfig& cfg, nn::Rng& rng) {
  std::vector<SlowPhase> phases;
  double t = draw(cfg.lead_cruise_s, rng);
  while (t < cfg.clip_seconds) {
    SlowPhase p;
    p.start_s = t;
    p.end_s = t + draw(cfg.lead_slow_s, rng);
    p.speed_ms = draw(cfg.lead_slow_kmh, rng) / 3.6;
    phases.push_back(p);
    t = p.end_s + draw(cfg.lead_cruise_s, rng);
  }
  return phases;
}

}  // namespace

VideoClip generate_clip(const WorldConfig& cfg, std::uint64_t clip_seed,
                        const std::string& name) {
  cfg.validate();
  const CameraModel cam = CameraModel::for_frame(cfg.frame_h(), cfg.frame_w());
  const double dt = cfg.dt();
  const int frames = cfg.frames_per_clip();

  nn::Rng scenario_rng = nn::Rng::derive(clip_seed, "scenario");
  std::vector<SlowPhase> slow_phases;
  if (cfg.lead_count > 0) slow_phases = lead_schedule(cfg, scenario_rng);

  std::vector<PedScenario> peds;
  double road_pos = 45.0 + scenario_rng.uniform(0.0, 10.0);
  for (int i = 0; i < cfg.ped_count; ++i) {
    PedScenario p;
    p.road_pos_m = road_pos;
    road_pos += draw(cfg.ped_spacing_m, scenario_rng);
    double side = scenario_rng.bernoulli(0.5) ? 1.0 : -1.0;
    p.lat0_m = side * draw(cfg.ped_lat_m, scenario_rng);
    p.crossing = scenario_rng.bernoulli(cfg.ped_crossing_prob);
    p.trigger_m = draw(cfg.ped_trigger_m, scenario_rng);
    p.episode_s = draw(cfg.ped_episode_s, scenario_rng);
    peds.push_back(p);
  }

  double ego_s = 0.0;
  double ego_v = cfg.cruise_ms();
  double lead_s = cfg.standoff_m + cfg.headway_s * cfg.cruise_ms() + 4.0;
  double lead_v = cfg.cruise_ms();

  VideoClip clip;
  clip.name = name;
  clip.seed = clip_seed;
  clip.frame_h = cfg.frame_h();
  clip.frame_w = cfg.frame_w();
  clip.frames.reserve(frames);
  clip.labels.reserve(frames);

  for (int t = 0; t < frames; ++t) {
    double now = t * dt;

    for (PedScenario& p : peds) {
      double d = p.road_pos_m - ego_s;
      if (!p.warned && p.crossing && d > 0.0 &&
          d <= p.trigger_m + std::max(ego_v, 2.0) * cfg.warn_s) {
        p.warned = true;
      }
      if (!p.triggered && p.crossing && d <= p.trigger_m && d > 0.0) {
        p.triggered = true;
        p.trigger_time_s = now;
      }
    }

    SceneState scene;
    scene.ego_v_ms = ego_v;
    if (cfg.lead_count > 0) {
      bool glyph = false;
      for (const SlowPhase& ph : slow_phases) {
        if (now >= ph.start_s - cfg.warn_s && now <= ph.end_s) glyph = true;
      }
      scene.lead = LeadLog{lead_s - ego_s, lead_v, glyph};
    }
    for (const PedScenario& p : peds) {
      PedLog log;
      log.fwd_m = p.road_pos_m - ego_s;
      log.crossing = p.crossing;
      bool episode = p.triggered && now < p.trigger_time_s + p.episode_s;
      bool done = p.triggered && now >= p.trigger_time_s + p.episode_s;
      if (p.triggered) {
        double walked = std::min(now - p.trigger_time_s, p.episode_s);
        double reach = std::abs(p.lat0_m) - 0.8;
        double step_in = reach * walked / p.episode_s;
        log.lat_m = p.lat0_m - std::copysign(step_in, p.lat0_m);
      } else {
        log.lat_m = p.lat0_m;
      }
      log.glyph_on = p.warned && !done;
      log.active = episode && log.fwd_m > 0.5;
      scene.peds.push_back(log);
    }

    nn::Rng dither_rng = nn::Rng::derive(clip_seed, "dither", static_cast<std::uint64_t>(t));
    std::vector<std::uint8_t> frame;
    render_frame(cfg, cam, scene, ego_s, dither_rng, frame);

    FrameLabel label;
    label.speed_kmh = ego_v * 3.6;
    label.gaze = gaze_from_components(gaze_components(cfg, cam, scene), cfg.gaze_sigma_cells);
    label.tags = frame_tags(cfg, scene);
    label.scene = scene;
    clip.frames.push_back(std::move(frame));
    clip.labels.push_back(std::move(label));

    // Advance to t+1: ego first (from the logged scene), then the lead.
    ego_v = control_step(cfg, scene, dt);
    ego_s += ego_v * dt;
    if (cfg.lead_count > 0) {
      double target = cfg.cruise_ms();
      for (const SlowPhase& ph : slow_phases) {
        if (now >= ph.start_s && now <= ph.end_s) target = ph.speed_ms;
      }
      double accel = std::clamp(kLeadGain * (target - lead_v), -kLeadDecel, kLeadAccel);
      lead_v = std::max(0.0, lead_v + accel * dt);
      lead_s += lead_v * dt;
    }
  }
  return clip;
}

}  // namespace pfd::world
