#include "pfdrive/harness/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/harness/flops.hpp"

namespace pfd::harness {

std::vector<Segment> segment_clip(int clip, int frames, int max_frames,
                                  int horizon) {
  if (frames < 1) throw ConfigError("segmentation: clip has no frames");
  if (max_frames == 0) return {{clip, 0, frames}};
  if (max_frames <= horizon)
    throw ConfigError("segmentation: segment length must exceed the horizon");
  std::vector<Segment> segs;
  int pos = 0;
  while (frames - pos >= max_frames) {
    segs.push_back({clip, pos, pos + max_frames});
    pos += max_frames;
  }
  if (pos < frames) segs.push_back({clip, pos, frames});
  return segs;
}

nlohmann::json ClipSplit::to_json() const {
  return {{"train", train}, {"val", val}, {"test", test}};
}

ClipSplit ClipSplit::from_json(const nlohmann::json& j) {
  ClipSplit s;
  s.train = j.at("train").get<std::vector<int>>();
  s.val = j.at("val").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  return s;
}

ClipSplit split_clips(int clip_count, double train_frac, double val_frac) {
  if (clip_count < 3) throw ConfigError("split: need at least 3 clips");
  if (!(train_frac > 0.0) || !(val_frac >= 0.0) || train_frac + val_frac >= 1.0)
    throw ConfigError("split: fractions must leave room for a test share");
  int ntrain = static_cast<int>(std::lround(clip_count * train_frac));
  int nval = static_cast<int>(std::lround(clip_count * val_frac));
  ntrain = std::max(1, ntrain);
  if (ntrain + nval >= clip_count) nval = std::max(0, clip_count - ntrain - 1);
  if (ntrain + nval >= clip_count)
    throw ConfigError("split: no clips left for the test share");
  ClipSplit s;
  for (int i = 0; i < ntrain; ++i) s.train.push_back(i);
  for (int i = ntrain; i < ntrain + nval; ++i) s.val.push_back(i);
  for (int i = ntrain + nval; i < clip_count; ++i) s.test.push_back(i);
  return s;
}

std::function<nn::FeatureGrid(int)> clip_frames(const world::DatasetReader& data,
                                                int clip) {
  int h = data.manifest().frame_h, w = data.manifest().frame_w;
  auto buf = std::make_shared<std::vector<uint8_t>>();
  return [&data, clip, h, w, buf](int t) {
    data.read_frame(clip, t, *buf);
    return model::frame_to_grid(*buf, h, w);
  };
}

std::vector<double> clip_speeds(const world::DatasetReader& data, int clip) {
  const auto& labels = data.labels(clip);
  std::vector<double> v;
  v.reserve(labels.size());
  for (const auto& l : labels) v.push_back(l.speed_kmh);
  return v;
}

bool pedestrian_tagged(const world::FrameLabel& label) {
  return std::find(label.tags.begin(), label.tags.end(), "pedestrian") !=
         label.tags.end();
}

namespace {

struct DiagAccum {
  double lik_sum = 0.0;
  int64_t lik_n = 0;
  double ov_sum = 0.0;
  int64_t ov_n = 0;
  bool any_placed = false;
  bool any_map = false;
};

// Runs every segment of the given clips with per-segment state resets.
// Fills per-video target-aligned vectors and, when diag is set, the fovea
// placement statistics.
std::vector<VideoEval> run_segments(model::DrivingModel& model,
                                    const world::DatasetReader& data,
                                    const std::vector<int>& clips,
                                    int segment_frames, DiagAccum* diag) {
  int horizon = model.config().horizon;
  std::vector<VideoEval> videos;
  for (int clip : clips) {
    if (clip < 0 || clip >= data.clip_count())
      throw ConfigError("evaluate: clip index " + std::to_string(clip) +
                        " outside the dataset");
    auto frame_at = clip_frames(data, clip);
    std::vector<double> speeds = clip_speeds(data, clip);
    int frames = data.clip(clip).frames;

    VideoEval ve;
    ve.clip = clip;
    for (const Segment& seg : segment_clip(clip, frames, segment_frames, horizon)) {
      model::PlannerState state = model.initial_state(clip);
      model::StepDiag prev;
      bool has_prev = false;
      for (int k = 0; k < seg.frames(); ++k) {
        int t = seg.begin + k;
        model::StepDiag d;
        double pred = model.step(frame_at(t), clip, state, nn::eval_pass(),
                                 diag ? &d : nullptr);
        if (k + horizon < seg.frames()) {
          ve.frames.push_back(t);
          ve.pred.push_back(std::max(0.0, pred));
          ve.target.push_back(speeds[t + horizon]);
        }
        if (diag) {
          if (!d.placement.cells.empty()) diag->any_placed = true;
          if (d.has_map) {
            diag->any_map = true;
            diag->lik_sum += d.likelihood;
            diag->lik_n += 1;
          }
          if (has_prev && !prev.placement.cells.empty()) {
            diag->ov_sum += fovea::fovea_overlap(prev.placement, d.placement);
            diag->ov_n += 1;
          }
          prev = std::move(d);
          has_prev = true;
        }
      }
    }
    videos.push_back(std::move(ve));
  }
  return videos;
}

double pooled_mae(const std::vector<VideoEval>& videos) {
  double sum = 0.0;
  int64_t n = 0;
  for (const auto& ve : videos)
    for (size_t i = 0; i < ve.pred.size(); ++i) {
      sum += std::abs(ve.pred[i] - ve.target[i]);
      n += 1;
    }
  if (n == 0) throw ConfigError("evaluate: no targets in the segment sweep");
  return sum / static_cast<double>(n);
}

}  // namespace

EvalReport evaluate_model(model::DrivingModel& model,
                          const world::DatasetReader& data,
                          const std::vector<int>& clips,
                          const EvalOptions& opts) {
  if (clips.empty()) throw ConfigError("evaluate: no clips selected");

  EvalReport rep;
  rep.model = opts.label.empty()
                  ? to_string(model.config().variant) + "/" +
                        to_string(model.config().fovea.policy)
                  : opts.label;
  rep.model_config = model.config().to_json();
  rep.segment_frames = opts.segment_frames;
  rep.frame_hz = data.manifest().frame_hz;
  rep.clips = clips;
  rep.speed_filter_kmh = opts.speed_filter_kmh;

  DiagAccum diag;
  rep.videos = run_segments(model, data, clips, opts.segment_frames, &diag);

  std::vector<double> pred, target;
  for (const auto& ve : rep.videos) {
    pred.insert(pred.end(), ve.pred.begin(), ve.pred.end());
    target.insert(target.end(), ve.target.begin(), ve.target.end());
  }
  rep.metrics = compute_metrics(pred, target);
  if (rep.metrics.corr < -1.0 - 1e-12 || rep.metrics.corr > 1.0 + 1e-12)
    throw StateError("evaluate: correlation left [-1, 1]");

  // Subgroup split on the input frame's tag, keeping only input frames at or
  // below the speed filter.
  int64_t filtered = 0;
  double ped_sum = 0.0, other_sum = 0.0;
  for (const auto& ve : rep.videos) {
    const auto& labels = data.labels(ve.clip);
    for (size_t i = 0; i < ve.frames.size(); ++i) {
      const auto& lab = labels[ve.frames[i]];
      if (lab.speed_kmh > opts.speed_filter_kmh) continue;
      filtered += 1;
      double err = std::abs(ve.pred[i] - ve.target[i]);
      if (pedestrian_tagged(lab)) {
        rep.pedestrian.frames += 1;
        ped_sum += err;
      } else {
        rep.other.frames += 1;
        other_sum += err;
      }
    }
  }
  if (rep.pedestrian.frames + rep.other.frames != filtered)
    throw StateError("evaluate: subgroup frame counts do not sum up");
  if (rep.pedestrian.frames > 0)
    rep.pedestrian.mae = ped_sum / static_cast<double>(rep.pedestrian.frames);
  if (rep.other.frames > 0)
    rep.other.mae = other_sum / static_cast<double>(rep.other.frames);

  for (int s : opts.curve_seconds) {
    int seg = s * rep.frame_hz;
    auto vids = run_segments(model, data, clips, seg, nullptr);
    rep.segment_curve.push_back({s, pooled_mae(vids)});
  }

  rep.fovea.present = diag.any_placed;
  rep.fovea.map_based = diag.any_map;
  if (diag.lik_n > 0)
    rep.fovea.mean_likelihood = diag.lik_sum / static_cast<double>(diag.lik_n);
  if (diag.ov_n > 0)
    rep.fovea.mean_overlap = diag.ov_sum / static_cast<double>(diag.ov_n);

  std::optional<model::AttentionConfig> att;
  if (model.has_attention()) att = model.attention_module()->config();
  rep.flops_per_frame = compute_flops(model.config(), att).total;
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json videos_json = nlohmann::json::array();
  for (const auto& ve : videos)
    videos_json.push_back({{"clip", ve.clip},
                           {"frames", ve.frames},
                           {"pred", ve.pred},
                           {"target", ve.target}});
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : segment_curve)
    curve.push_back({{"seconds", p.seconds}, {"mae", p.mae}});
  return {{"model", model},
          {"config", model_config},
          {"segment_frames", segment_frames},
          {"frame_hz", frame_hz},
          {"clips", clips},
          {"metrics", metrics.to_json()},
          {"videos", videos_json},
          {"subgroup",
           {{"speed_filter_kmh", speed_filter_kmh},
            {"pedestrian",
             {{"frames", pedestrian.frames}, {"mae", pedestrian.mae}}},
            {"other", {{"frames", other.frames}, {"mae", other.mae}}}}},
          {"segment_curve", curve},
          {"fovea",
           {{"present", fovea.present},
            {"map_based", fovea.map_based},
            {"mean_likelihood", fovea.mean_likelihood},
            {"mean_overlap", fovea.mean_overlap}}},
          {"flops_per_frame", flops_per_frame}};
}

}  // namespace pfd::harness
