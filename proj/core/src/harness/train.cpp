#include "pfdrive/harness/train.hpp"

#include <algorithm>
#include <cmath>

#include "pfdrive/errors.hpp"
#include "pfdrive/nn/adam.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::harness {

void TrainConfig::validate(int horizon) const {
  if (!(lr > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (segment_frames <= horizon)
    throw ConfigError("train: segment length must exceed the horizon");
  if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac >= 1.0)
    throw ConfigError("train: split fractions must leave room for test");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"epochs", epochs},
          {"segment_frames", segment_frames},
          {"train_frac", train_frac},
          {"val_frac", val_frac},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.segment_frames = j.value("segment_frames", c.segment_frames);
  c.train_frac = j.value("train_frac", c.train_frac);
  c.val_frac = j.value("val_frac", c.val_frac);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json TrainResult::to_json() const {
  return {{"split", split.to_json()},
          {"initial_val_loss", initial_val_loss},
          {"train_loss", train_loss},
          {"val_loss", val_loss}};
}

double validation_loss(model::DrivingModel& model,
                       const world::DatasetReader& data,
                       const std::vector<int>& clips) {
  if (clips.empty()) throw ConfigError("validation: no clips");
  int horizon = model.config().horizon;
  double sum = 0.0;
  int64_t n = 0;
  for (int clip : clips) {
    auto frame_at = clip_frames(data, clip);
    std::vector<double> speeds = clip_speeds(data, clip);
    int frames = data.clip(clip).frames;
    std::vector<double> preds = model.forward_clip(frame_at, frames, clip);
    for (int t = 0; t + horizon < frames; ++t) {
      double d = preds[t] - speeds[t + horizon];
      sum += d * d;
      n += 1;
    }
  }
  if (n == 0) throw ConfigError("validation: clips carry no targets");
  return sum / static_cast<double>(n);
}

TrainResult train_driving_model(model::DrivingModel& model,
                                const world::DatasetReader& data,
                                const TrainConfig& cfg) {
  cfg.validate(model.config().horizon);
  bool needs_map = model.config().fovea.policy == fovea::FoveaPolicy::kTopK ||
                   model.config().fovea.policy == fovea::FoveaPolicy::kSampled;
  if (needs_map && !model.has_attention())
    throw ConfigError(
        "train: gaze-driven fovea policy without an attention checkpoint");

  TrainResult res;
  res.split = split_clips(data.clip_count(), cfg.train_frac, cfg.val_frac);
  if (res.split.val.empty()) throw ConfigError("train: empty validation share");

  uint64_t frozen_before = model.frozen_hash();
  res.initial_val_loss = validation_loss(model, data, res.split.val);

  std::vector<Segment> segments;
  for (int clip : res.split.train)
    for (const Segment& s : segment_clip(clip, data.clip(clip).frames,
                                         cfg.segment_frames,
                                         model.config().horizon))
      segments.push_back(s);
  if (segments.empty()) throw ConfigError("train: no training segments");

  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  nn::Adam adam(ac);
  auto visit = [&](const nn::ParamVisitor& v) { model.visit_params(v); };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(segments.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    nn::Rng shuffle_rng(nn::Rng::mix(cfg.seed, "epoch_order", epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<size_t>(
                    shuffle_rng.uniform_int(static_cast<int>(i)))]);

    double loss_sum = 0.0;
    for (size_t idx : order) {
      const Segment& seg = segments[idx];
      auto frame_at = clip_frames(data, seg.clip);
      std::vector<double> speeds = clip_speeds(data, seg.clip);
      nn::zero_grads(visit);
      uint64_t pass_seed = nn::Rng::mix(
          cfg.seed, "pass",
          static_cast<uint64_t>(epoch) * segments.size() + idx);
      loss_sum += model.train_segment(frame_at, speeds, seg.begin, seg.end,
                                      seg.clip, pass_seed);
      adam.step(visit);
    }
    res.train_loss.push_back(loss_sum / static_cast<double>(segments.size()));
    res.val_loss.push_back(validation_loss(model, data, res.split.val));
  }

  if (model.frozen_hash() != frozen_before)
    throw StateError("train: frozen parameters moved during training");
  return res;
}

}  // namespace pfd::harness
