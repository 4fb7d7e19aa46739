#include "pfdrive/attention/attention_model.hpp"

#include <algorithm>
#include <cmath>

#include "pfdrive/nn/adam.hpp"

namespace pfd::attention {

AttentionModel::AttentionModel(const model::AttentionConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& arch = cfg_.arch;
  channels_ = arch.feature_channels();
  auto [ph, pw] = arch.periph_pre_shape();
  pre_h_ = ph;
  pre_w_ = pw;
  nn::Rng bb_rng = nn::Rng::derive(model::kFrozenBackboneSeed, "backbone");
  backbone_ = model::ConvStack(arch.backbone, /*batch_norm=*/false, 0.0,
                               /*trainable=*/false, bb_rng);
  nn::Rng head_rng = nn::Rng::derive(cfg_.seed, "attention_head");
  head_ = model::ConvStack(arch.periph_head, /*batch_norm=*/true, arch.dropout,
                           /*trainable=*/true, head_rng);
  nn::Rng lstm_rng = nn::Rng::derive(cfg_.seed, "attention_lstm");
  lstm_ = nn::ConvLstmCell(kGridRows, kGridCols, channels_,
                           cfg_.hidden_channels, cfg_.lstm_kernel,
                           /*trainable=*/true, lstm_rng);
  nn::Rng out_rng = nn::Rng::derive(cfg_.seed, "attention_out");
  nn::Conv2dSpec out_spec;
  out_spec.cin = cfg_.hidden_channels;
  out_spec.cout = 1;
  out_ = nn::Conv2d(out_spec, /*trainable=*/true, out_rng);
}

nn::FeatureGrid AttentionModel::backbone_forward(const nn::FeatureGrid& low) {
  nn::require_shape(low, cfg_.arch.preproc.periph_h, cfg_.arch.preproc.periph_w,
                    3, "attention backbone input");
  return backbone_.forward(low, nn::eval_pass());
}

AttentionMap AttentionModel::predict(const nn::FeatureGrid& backbone_out,
                                     int64_t clip_id, nn::ConvLstmState& state,
                                     const nn::Pass& pass,
                                     int64_t frame_index) {
  if (state.clip_id != clip_id)
    throw StateError("attention state belongs to clip " +
                     std::to_string(state.clip_id) + ", not " +
                     std::to_string(clip_id) + "; reset at clip start");
  nn::FeatureGrid h = head_.forward(backbone_out, pass);
  nn::require_shape(h, pre_h_, pre_w_, channels_, "attention head output");
  nn::FeatureGrid up = nn::resample_bilinear(h, kGridRows, kGridCols);
  nn::FeatureGrid hidden = lstm_.step(up, state, pass);
  nn::FeatureGrid logits = out_.forward(hidden, pass);

  AttentionMap map;
  map.frame_index = frame_index;
  double mx = logits.values[0];
  for (double v : logits.values) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t i = 0; i < logits.values.size(); ++i) {
    double e = std::exp(logits.values[i] - mx);
    map.grid.values[i] = e;
    sum += e;
  }
  for (double& v : map.grid.values) v /= sum;
  return map;
}

std::vector<AttentionMap> AttentionModel::predict_clip(
    const std::vector<nn::FeatureGrid>& lows, int64_t clip_id) {
  nn::ConvLstmState state = initial_state(clip_id);
  std::vector<AttentionMap> maps;
  maps.reserve(lows.size());
  for (size_t t = 0; t < lows.size(); ++t)
    maps.push_back(predict(backbone_forward(lows[t]), clip_id, state,
                           nn::eval_pass(), static_cast<int64_t>(t)));
  return maps;
}

void AttentionModel::backward_step(const nn::FeatureGrid& dlogits,
                                   nn::FeatureGrid* dh, nn::FeatureGrid* dc) {
  nn::require_shape(dlogits, kGridRows, kGridCols, 1, "attention dlogits");
  nn::FeatureGrid dhidden = out_.backward(dlogits);
  for (size_t i = 0; i < dhidden.values.size(); ++i)
    dhidden.values[i] += dh->values[i];
  nn::FeatureGrid dup = lstm_.backward_step(dhidden, *dc, dh, dc);
  nn::FeatureGrid dpre = nn::resample_bilinear_backward(dup, pre_h_, pre_w_);
  head_.backward(dpre);
}

void AttentionModel::visit_params(const nn::ParamVisitor& visit) {
  backbone_.visit_params("attention.backbone", visit);
  head_.visit_params("attention.head", visit);
  lstm_.visit_params("attention.lstm", visit);
  out_.visit_params("attention.out", visit);
}

void AttentionModel::clear_cache() {
  backbone_.clear_cache();
  head_.clear_cache();
  lstm_.clear_cache();
  out_.clear_cache();
}

uint64_t AttentionModel::backbone_hash() {
  return nn::param_hash([&](const nn::ParamVisitor& v) {
    backbone_.visit_params("attention.backbone", v);
  });
}

uint64_t AttentionModel::params_hash() {
  return nn::param_hash([&](const nn::ParamVisitor& v) { visit_params(v); });
}

void AttentionModel::save_checkpoint(const std::string& path,
                                     const nlohmann::json& extra_metadata) {
  nn::Checkpoint ckpt = nn::Checkpoint::capture(
      [&](const nn::ParamVisitor& v) { visit_params(v); });
  ckpt.metadata["kind"] = "attention";
  ckpt.metadata["config"] = cfg_.to_json();
  ckpt.metadata["backbone_hash"] = backbone_hash();
  if (!extra_metadata.is_null())
    for (auto it = extra_metadata.begin(); it != extra_metadata.end(); ++it)
      ckpt.metadata[it.key()] = it.value();
  ckpt.save(path);
}

AttentionModel AttentionModel::load_checkpoint(const std::string& path) {
  nn::Checkpoint ckpt = nn::Checkpoint::load(path);
  if (ckpt.metadata.value("kind", std::string()) != "attention")
    throw ConfigError("checkpoint at " + path + " is not an attention model");
  AttentionModel m(model::AttentionConfig::from_json(ckpt.metadata.at("config")));
  ckpt.restore([&](const nn::ParamVisitor& v) { m.visit_params(v); });
  return m;
}

// --------------------------------------------------------------- training --

nlohmann::json AttentionTrainConfig::to_json() const {
  return {{"lr", lr},
          {"epochs", epochs},
          {"segment_frames", segment_frames},
          {"seed", seed}};
}

AttentionTrainConfig AttentionTrainConfig::from_json(const nlohmann::json& j) {
  AttentionTrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.segment_frames = j.value("segment_frames", c.segment_frames);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

struct Segment {
  int clip = 0;
  int begin = 0;
  int end = 0;  // exclusive
};

// Preprocessed low-res inputs for one clip.
std::vector<nn::FeatureGrid> load_lows(const world::DatasetReader& data,
                                       int clip, const model::PreprocConfig& pp) {
  std::vector<nn::FeatureGrid> lows;
  lows.reserve(data.clip(clip).frames);
  std::vector<uint8_t> buf;
  for (int f = 0; f < data.clip(clip).frames; ++f) {
    data.read_frame(clip, f, buf);
    nn::FeatureGrid frame = model::frame_to_grid(buf, data.manifest().frame_h,
                                                 data.manifest().frame_w);
    lows.push_back(model::preprocess_peripheral(frame, pp));
  }
  return lows;
}

void check_gaze(const world::DatasetReader& data, int clip) {
  const auto& labels = data.labels(clip);
  if (labels.empty())
    throw DatasetError("clip " + data.clip(clip).name + " has no labels");
  for (const auto& l : labels) {
    if (l.gaze.size() != static_cast<size_t>(kGridCells))
      throw DatasetError("clip " + data.clip(clip).name +
                         " lacks gaze maps; attention training needs them");
    double s = 0.0;
    for (double g : l.gaze) s += g;
    if (!(s > 0.0))
      throw DatasetError("clip " + data.clip(clip).name +
                         " has an all-zero gaze map");
  }
}

double frame_kl(const std::vector<double>& truth, const AttentionMap& pred) {
  double kl = 0.0;
  for (int i = 0; i < kGridCells; ++i) {
    double g = truth[i];
    if (g <= 0.0) continue;
    kl += g * (std::log(g) - std::log(std::max(pred.grid.values[i], 1e-300)));
  }
  return kl;
}

}  // namespace

AttentionTrainResult train_attention(AttentionModel& model,
                                     const world::DatasetReader& data,
                                     const std::vector<int>& clips,
                                     const AttentionTrainConfig& cfg) {
  if (clips.empty()) throw ConfigError("attention training: no clips given");
  if (cfg.segment_frames < 2)
    throw ConfigError("attention training: segment must be >= 2 frames");
  if (cfg.epochs < 1) throw ConfigError("attention training: epochs must be >= 1");

  std::vector<std::vector<nn::FeatureGrid>> lows(clips.size());
  std::vector<Segment> segments;
  for (size_t ci = 0; ci < clips.size(); ++ci) {
    int clip = clips[ci];
    check_gaze(data, clip);
    lows[ci] = load_lows(data, clip, model.config().arch.preproc);
    int frames = data.clip(clip).frames;
    for (int b = 0; b < frames; b += cfg.segment_frames) {
      int e = std::min(frames, b + cfg.segment_frames);
      if (e - b >= 2) segments.push_back({static_cast<int>(ci), b, e});
    }
  }
  if (segments.empty())
    throw ConfigError("attention training: no usable segments");

  uint64_t frozen = model.backbone_hash();
  nn::Adam adam(nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  auto visit = [&](const nn::ParamVisitor& v) { model.visit_params(v); };

  AttentionTrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Deterministic per-epoch shuffle.
    nn::Rng order_rng = nn::Rng::derive(cfg.seed, "attention_epoch", epoch);
    std::vector<size_t> order(segments.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(
                                  order_rng.uniform_int(static_cast<int>(i)))]);

    double epoch_kl = 0.0;
    int64_t epoch_frames = 0;
    for (size_t oi = 0; oi < order.size(); ++oi) {
      const Segment& seg = segments[order[oi]];
      nn::Rng pass_rng = nn::Rng::derive(
          cfg.seed, "attention_pass",
          static_cast<uint64_t>(epoch) * segments.size() + order[oi]);
      nn::Pass pass{true, &pass_rng};
      const auto& labels = data.labels(clips[seg.clip]);

      nn::ConvLstmState state = model.initial_state(seg.clip);
      int n = seg.end - seg.begin;
      std::vector<AttentionMap> preds;
      preds.reserve(n);
      for (int t = seg.begin; t < seg.end; ++t)
        preds.push_back(model.predict(model.backbone_forward(lows[seg.clip][t]),
                                      seg.clip, state, pass, t));

      // KL(truth || softmax(logits)): dlogits = (pred - truth) / n.
      nn::zero_grads(visit);
      nn::FeatureGrid dh(kGridRows, kGridCols, model.config().hidden_channels);
      nn::FeatureGrid dc(kGridRows, kGridCols, model.config().hidden_channels);
      for (int t = seg.end - 1; t >= seg.begin; --t) {
        const auto& gaze = labels[t].gaze;
        const AttentionMap& p = preds[t - seg.begin];
        epoch_kl += frame_kl(gaze, p);
        nn::FeatureGrid dlogits(kGridRows, kGridCols, 1);
        for (int i = 0; i < kGridCells; ++i)
          dlogits.values[i] = (p.grid.values[i] - gaze[i]) / n;
        model.backward_step(dlogits, &dh, &dc);
      }
      adam.step(visit);
      model.clear_cache();
      epoch_frames += n;
    }
    result.epoch_loss.push_back(epoch_kl / static_cast<double>(epoch_frames));
  }

  if (model.backbone_hash() != frozen)
    throw StateError("attention training mutated the frozen backbone");
  return result;
}

double evaluate_attention_kl(AttentionModel& model,
                             const world::DatasetReader& data,
                             const std::vector<int>& clips) {
  double total = 0.0;
  int64_t frames = 0;
  for (int clip : clips) {
    check_gaze(data, clip);
    auto lows = load_lows(data, clip, model.config().arch.preproc);
    auto maps = model.predict_clip(lows, clip);
    const auto& labels = data.labels(clip);
    for (size_t t = 0; t < maps.size(); ++t)
      total += frame_kl(labels[t].gaze, maps[t]);
    frames += static_cast<int64_t>(maps.size());
  }
  return total / static_cast<double>(frames);
}

double uniform_baseline_kl(const world::DatasetReader& data,
                           const std::vector<int>& clips) {
  AttentionMap uni = AttentionMap::uniform();
  double total = 0.0;
  int64_t frames = 0;
  for (int clip : clips) {
    check_gaze(data, clip);
    const auto& labels = data.labels(clip);
    for (const auto& l : labels) total += frame_kl(l.gaze, uni);
    frames += static_cast<int64_t>(labels.size());
  }
  return total / static_cast<double>(frames);
}

}  // namespace pfd::attention
