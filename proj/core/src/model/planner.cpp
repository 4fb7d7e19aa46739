#include "pfdrive/model/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "pfdrive/nn/resample.hpp"

namespace pfd::model {

namespace {

constexpr int kRows = fovea::kGridRows;
constexpr int kCols = fovea::kGridCols;
constexpr int kPatch = 3;
constexpr int kDualSize = 14;

void check_insert_args(const std::vector<nn::FeatureGrid>& patches,
                       const std::vector<fovea::Cell>& corners, int channels) {
  if (patches.size() != corners.size())
    throw ShapeError("insert_fovea_features: " +
                     std::to_string(patches.size()) + " patches vs " +
                     std::to_string(corners.size()) + " corners");
  for (size_t k = 0; k < patches.size(); ++k) {
    nn::require_shape(patches[k], kPatch, kPatch, channels,
                      "fovea feature patch");
    const fovea::Cell& c = corners[k];
    if (c.i < 0 || c.i > kRows - kPatch || c.j < 0 || c.j > kCols - kPatch)
      throw ShapeError("insert_fovea_features: corner (" + std::to_string(c.i) +
                       ", " + std::to_string(c.j) + ") outside [0, " +
                       std::to_string(kRows - kPatch) + "] x [0, " +
                       std::to_string(kCols - kPatch) + "]");
  }
}

size_t fused_index(const fovea::Cell& corner, int pi, int pj, int c,
                   int channels) {
  return (static_cast<size_t>(corner.i + pi) * kCols + (corner.j + pj)) *
             channels +
         c;
}

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

nn::FeatureGrid insert_fovea_features(
    const std::vector<nn::FeatureGrid>& patches,
    const std::vector<fovea::Cell>& corners, int channels) {
  check_insert_args(patches, corners, channels);
  nn::FeatureGrid fused(kRows, kCols, channels);
  std::vector<uint8_t> covered(fused.size(), 0);
  for (size_t k = 0; k < patches.size(); ++k)
    for (int pi = 0; pi < kPatch; ++pi)
      for (int pj = 0; pj < kPatch; ++pj)
        for (int c = 0; c < channels; ++c) {
          size_t idx = fused_index(corners[k], pi, pj, c, channels);
          double v = patches[k].at(pi, pj, c);
          if (!covered[idx]) {
            fused.values[idx] = v;
            covered[idx] = 1;
          } else {
            fused.values[idx] = std::max(fused.values[idx], v);
          }
        }
  return fused;
}

std::vector<nn::FeatureGrid> insert_fovea_backward(
    const nn::FeatureGrid& dfused, const std::vector<nn::FeatureGrid>& patches,
    const std::vector<fovea::Cell>& corners) {
  int channels = dfused.channels;
  nn::require_shape(dfused, kRows, kCols, channels, "fused feature gradient");
  nn::FeatureGrid fused = insert_fovea_features(patches, corners, channels);
  std::vector<int> ties(fused.size(), 0);
  for (size_t k = 0; k < patches.size(); ++k)
    for (int pi = 0; pi < kPatch; ++pi)
      for (int pj = 0; pj < kPatch; ++pj)
        for (int c = 0; c < channels; ++c) {
          size_t idx = fused_index(corners[k], pi, pj, c, channels);
          if (patches[k].at(pi, pj, c) == fused.values[idx]) ++ties[idx];
        }
  std::vector<nn::FeatureGrid> dpatches;
  dpatches.reserve(patches.size());
  for (size_t k = 0; k < patches.size(); ++k) {
    nn::FeatureGrid d(kPatch, kPatch, channels);
    for (int pi = 0; pi < kPatch; ++pi)
      for (int pj = 0; pj < kPatch; ++pj)
        for (int c = 0; c < channels; ++c) {
          size_t idx = fused_index(corners[k], pi, pj, c, channels);
          if (patches[k].at(pi, pj, c) == fused.values[idx])
            d.at(pi, pj, c) = dfused.values[idx] / ties[idx];
        }
    dpatches.push_back(std::move(d));
  }
  return dpatches;
}

nn::FeatureGrid concat_features(const nn::FeatureGrid& periph,
                                const nn::FeatureGrid& foveal) {
  if (periph.height != foveal.height || periph.width != foveal.width)
    throw ShapeError("concat_features: spatial mismatch " +
                     periph.shape_str() + " vs " + foveal.shape_str());
  nn::FeatureGrid out(periph.height, periph.width,
                      periph.channels + foveal.channels);
  for (int i = 0; i < out.height; ++i)
    for (int j = 0; j < out.width; ++j) {
      double* dst = out.cell(i, j);
      std::memcpy(dst, periph.cell(i, j), periph.channels * sizeof(double));
      std::memcpy(dst + periph.channels, foveal.cell(i, j),
                  foveal.channels * sizeof(double));
    }
  return out;
}

void concat_backward(const nn::FeatureGrid& dcombined, int periph_channels,
                     nn::FeatureGrid* dperiph, nn::FeatureGrid* dfoveal) {
  if (periph_channels <= 0 || periph_channels >= dcombined.channels)
    throw ShapeError("concat_backward: cannot split " +
                     std::to_string(dcombined.channels) + " channels at " +
                     std::to_string(periph_channels));
  int fc = dcombined.channels - periph_channels;
  *dperiph = nn::FeatureGrid(dcombined.height, dcombined.width, periph_channels);
  *dfoveal = nn::FeatureGrid(dcombined.height, dcombined.width, fc);
  for (int i = 0; i < dcombined.height; ++i)
    for (int j = 0; j < dcombined.width; ++j) {
      const double* src = dcombined.cell(i, j);
      std::memcpy(dperiph->cell(i, j), src, periph_channels * sizeof(double));
      std::memcpy(dfoveal->cell(i, j), src + periph_channels,
                  fc * sizeof(double));
    }
}

std::vector<double> positional_encoding(fovea::Cell cell, int k) {
  if (k <= 0 || k % 2 != 0)
    throw ConfigError(
        "positional encoding: channel count must be positive and even, got " +
        std::to_string(k));
  int half = k / 2;
  int pairs = (half + 1) / 2;
  std::vector<double> pe(k);
  auto fill = [&](int offset, double pos) {
    for (int t = 0; t < half; ++t) {
      int m = t / 2;
      double freq = pairs <= 1 ? 1.0
                               : std::pow(10000.0, -static_cast<double>(m) /
                                                       (pairs - 1));
      double a = pos * freq;
      pe[offset + t] = t % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  };
  fill(0, cell.i);
  fill(half, cell.j);
  return pe;
}

void add_positional_encoding(nn::FeatureGrid& patch, fovea::Cell cell) {
  std::vector<double> pe = positional_encoding(cell, patch.channels);
  for (int i = 0; i < patch.height; ++i)
    for (int j = 0; j < patch.width; ++j) {
      double* p = patch.cell(i, j);
      for (int c = 0; c < patch.channels; ++c) p[c] += pe[c];
    }
}

// ----------------------------------------------------------- DrivingModel --

DrivingModel::DrivingModel(const ModelConfig& cfg)
    : cfg_(validated(cfg)),
      geom_(cfg_.arch.frame_geometry()),
      channels_(cfg_.arch.feature_channels()),
      periph_(cfg_.arch, cfg_.seed) {
  if (uses_foveae())
    fovea_enc_.emplace(cfg_.arch, cfg_.variant == PlannerVariant::kDual,
                       cfg_.seed);
  int hidden = cfg_.hidden_channels;
  if (cfg_.variant == PlannerVariant::kDual) {
    nn::Rng rp = nn::Rng::derive(cfg_.seed, "planner_lstm_periph");
    lstm_dual_periph_ = nn::ConvLstmCell(kRows, kCols, channels_, hidden,
                                         cfg_.lstm_kernel, true, rp);
    nn::Rng rf = nn::Rng::derive(cfg_.seed, "planner_lstm_fovea");
    lstm_dual_fovea_ = nn::ConvLstmCell(kDualSize, kDualSize, 2 * channels_,
                                        hidden, cfg_.lstm_kernel, true, rf);
  } else {
    int cin = cfg_.variant == PlannerVariant::kCombined ? 2 * channels_
                                                        : channels_;
    nn::Rng r = nn::Rng::derive(cfg_.seed, "planner_lstm");
    lstm_main_ =
        nn::ConvLstmCell(kRows, kCols, cin, hidden, cfg_.lstm_kernel, true, r);
  }
  int flat = cfg_.variant == PlannerVariant::kDual
                 ? (kRows * kCols + kDualSize * kDualSize) * hidden
                 : kRows * kCols * hidden;
  nn::Rng fc_rng = nn::Rng::derive(cfg_.seed, "planner_fc");
  int in = flat;
  for (size_t i = 0; i < cfg_.fc_widths.size(); ++i) {
    bool last = i + 1 == cfg_.fc_widths.size();
    fc_.emplace_back(in, cfg_.fc_widths[i],
                     last ? nn::Activation::kLinear : nn::Activation::kRelu,
                     true, fc_rng);
    in = cfg_.fc_widths[i];
  }
}

bool DrivingModel::uses_foveae() const {
  return cfg_.variant != PlannerVariant::kPeripheryOnly &&
         cfg_.fovea.policy != fovea::FoveaPolicy::kNone;
}

bool DrivingModel::needs_map() const {
  return uses_foveae() && (cfg_.fovea.policy == fovea::FoveaPolicy::kTopK ||
                           cfg_.fovea.policy == fovea::FoveaPolicy::kSampled);
}

void DrivingModel::set_attention(const attention::AttentionModel& module) {
  if (!needs_map())
    throw ConfigError("set_attention: policy " +
                      fovea::to_string(cfg_.fovea.policy) +
                      " does not use gaze maps");
  if (module.config().arch.to_json() != cfg_.arch.to_json())
    throw ConfigError(
        "set_attention: attention architecture differs from the driving "
        "architecture");
  attention_.emplace(module);
  attention_->visit_params(
      [](const std::string&, nn::Parameter& p) { p.trainable = false; });
}

PlannerState DrivingModel::initial_state(int64_t clip_id) const {
  PlannerState s;
  s.clip_id = clip_id;
  if (cfg_.variant == PlannerVariant::kDual) {
    s.dual_periph = lstm_dual_periph_.initial_state(clip_id);
    s.dual_fovea = lstm_dual_fovea_.initial_state(clip_id);
  } else {
    s.main = lstm_main_.initial_state(clip_id);
  }
  if (attention_) s.attention = attention_->initial_state(clip_id);
  return s;
}

double DrivingModel::step(const nn::FeatureGrid& frame, int64_t clip_id,
                          PlannerState& state, const nn::Pass& pass,
                          StepDiag* diag) {
  if (state.clip_id != clip_id)
    throw StateError("driving model: state for clip " +
                     std::to_string(state.clip_id) + " used with clip " +
                     std::to_string(clip_id));
  nn::require_shape(frame, cfg_.arch.frame_h, cfg_.arch.frame_w, 3,
                    "driving model frame");

  nn::FeatureGrid low = preprocess_peripheral(frame, cfg_.arch.preproc);
  nn::FeatureGrid bb = periph_.backbone_forward(low);
  nn::FeatureGrid xp = periph_.head_forward(bb, pass);

  fovea::FoveaPlacement placement;
  attention::AttentionMap map;
  const attention::AttentionMap* map_ptr = nullptr;
  if (uses_foveae()) {
    if (needs_map()) {
      if (!attention_)
        throw StateError("driving model: policy " +
                         fovea::to_string(cfg_.fovea.policy) +
                         " requires an installed attention module");
      map = attention_->predict(bb, clip_id, state.attention, nn::eval_pass(),
                                state.frame);
      map_ptr = &map;
    }
    nn::Rng frame_rng(nn::Rng::mix(
        nn::Rng::mix(cfg_.fovea.seed, "fovea_clip",
                     static_cast<uint64_t>(clip_id)),
        "frame", static_cast<uint64_t>(state.frame)));
    placement = fovea::select_foveae(map_ptr, cfg_.fovea, geom_, frame_rng);
  }

  std::vector<nn::FeatureGrid> patches;
  patches.reserve(placement.size());
  for (size_t k = 0; k < placement.size(); ++k) {
    nn::FeatureGrid in =
        crop_and_resize_patch(frame, placement.rects[k], cfg_.arch.preproc);
    patches.push_back(fovea_enc_->forward(in, pass));
  }

  if (diag) {
    diag->placement = placement;
    diag->has_map = map_ptr != nullptr;
    diag->likelihood =
        map_ptr ? fovea::fovea_likelihood(map, placement.cells) : 0.0;
    if (map_ptr) diag->map = map;
  }

  double z = planner_forward(xp, std::move(patches), placement, state, pass);
  state.frame += 1;
  return cfg_.output_offset + cfg_.output_scale * z;
}

double DrivingModel::planner_forward(const nn::FeatureGrid& xp,
                                     std::vector<nn::FeatureGrid> patches,
                                     const fovea::FoveaPlacement& placement,
                                     PlannerState& state,
                                     const nn::Pass& pass) {
  std::vector<double> flat;
  if (cfg_.variant == PlannerVariant::kDual) {
    if (patches.size() != 2)
      throw ShapeError("dual planner: expected 2 foveae, got " +
                       std::to_string(patches.size()));
    for (size_t k = 0; k < 2; ++k)
      add_positional_encoding(patches[k], placement.cells[k]);
    nn::FeatureGrid fin(kDualSize, kDualSize, 2 * channels_);
    for (int i = 0; i < kDualSize; ++i)
      for (int j = 0; j < kDualSize; ++j) {
        double* dst = fin.cell(i, j);
        std::memcpy(dst, patches[0].cell(i, j), channels_ * sizeof(double));
        std::memcpy(dst + channels_, patches[1].cell(i, j),
                    channels_ * sizeof(double));
      }
    nn::FeatureGrid ph = lstm_dual_periph_.step(xp, state.dual_periph, pass);
    nn::FeatureGrid fh = lstm_dual_fovea_.step(fin, state.dual_fovea, pass);
    flat.reserve(ph.size() + fh.size());
    flat.insert(flat.end(), ph.values.begin(), ph.values.end());
    flat.insert(flat.end(), fh.values.begin(), fh.values.end());
  } else {
    nn::FeatureGrid input;
    if (cfg_.variant == PlannerVariant::kPeripheryOnly) {
      input = xp;
    } else {
      nn::FeatureGrid xf =
          insert_fovea_features(patches, placement.corners, channels_);
      input = concat_features(xp, xf);
    }
    flat = lstm_main_.step(input, state.main, pass).values;
  }
  if (pass.train)
    trace_.push_back({std::move(patches), placement.corners, placement.cells});
  std::vector<double> v = std::move(flat);
  for (auto& layer : fc_) v = layer.forward(v, pass);
  return v[0];
}

void DrivingModel::planner_backward(double dz, nn::FeatureGrid* dh_main,
                                    nn::FeatureGrid* dc_main,
                                    nn::FeatureGrid* dh_dp,
                                    nn::FeatureGrid* dc_dp,
                                    nn::FeatureGrid* dh_df,
                                    nn::FeatureGrid* dc_df,
                                    size_t trace_index) {
  std::vector<double> dv{dz};
  for (auto it = fc_.rbegin(); it != fc_.rend(); ++it) dv = it->backward(dv);
  const StepTrace& tr = trace_[trace_index];
  if (cfg_.variant == PlannerVariant::kDual) {
    size_t np = static_cast<size_t>(kRows) * kCols * cfg_.hidden_channels;
    nn::FeatureGrid dph(kRows, kCols, cfg_.hidden_channels);
    for (size_t i = 0; i < np; ++i) dph.values[i] = dv[i] + dh_dp->values[i];
    nn::FeatureGrid dfh(kDualSize, kDualSize, cfg_.hidden_channels);
    for (size_t i = 0; i < dfh.size(); ++i)
      dfh.values[i] = dv[np + i] + dh_df->values[i];
    nn::FeatureGrid dxf = lstm_dual_fovea_.backward_step(dfh, *dc_df, dh_df,
                                                         dc_df);
    nn::FeatureGrid dxp = lstm_dual_periph_.backward_step(dph, *dc_dp, dh_dp,
                                                          dc_dp);
    nn::FeatureGrid dy0(kDualSize, kDualSize, channels_);
    nn::FeatureGrid dy1(kDualSize, kDualSize, channels_);
    for (int i = 0; i < kDualSize; ++i)
      for (int j = 0; j < kDualSize; ++j) {
        const double* src = dxf.cell(i, j);
        std::memcpy(dy0.cell(i, j), src, channels_ * sizeof(double));
        std::memcpy(dy1.cell(i, j), src + channels_,
                    channels_ * sizeof(double));
      }
    // the two foveal forwards share the encoder cache: pop in reverse
    fovea_enc_->backward(dy1);
    fovea_enc_->backward(dy0);
    periph_.backward(dxp);
  } else {
    nn::FeatureGrid dh(kRows, kCols, cfg_.hidden_channels);
    for (size_t i = 0; i < dh.size(); ++i)
      dh.values[i] = dv[i] + dh_main->values[i];
    nn::FeatureGrid dx = lstm_main_.backward_step(dh, *dc_main, dh_main,
                                                  dc_main);
    if (cfg_.variant == PlannerVariant::kPeripheryOnly) {
      periph_.backward(dx);
    } else {
      nn::FeatureGrid dxp, dxf;
      concat_backward(dx, channels_, &dxp, &dxf);
      if (!tr.patches.empty()) {
        std::vector<nn::FeatureGrid> dpatches =
            insert_fovea_backward(dxf, tr.patches, tr.corners);
        for (size_t k = dpatches.size(); k-- > 0;)
          fovea_enc_->backward(dpatches[k]);
      }
      periph_.backward(dxp);
    }
  }
}

std::vector<double> DrivingModel::forward_clip(
    const std::function<nn::FeatureGrid(int)>& frame_at, int frames,
    int64_t clip_id, std::vector<StepDiag>* diags) {
  if (frames < cfg_.horizon + 1)
    throw ConfigError("forward_clip: clip of " + std::to_string(frames) +
                      " frames is shorter than horizon + 1 = " +
                      std::to_string(cfg_.horizon + 1));
  PlannerState st = initial_state(clip_id);
  std::vector<double> preds(frames);
  if (diags) diags->assign(frames, StepDiag{});
  for (int t = 0; t < frames; ++t)
    preds[t] = step(frame_at(t), clip_id, st, nn::eval_pass(),
                    diags ? &(*diags)[t] : nullptr);
  return preds;
}

double DrivingModel::train_segment(
    const std::function<nn::FeatureGrid(int)>& frame_at,
    const std::vector<double>& speeds_kmh, int begin, int end, int64_t clip_id,
    uint64_t pass_seed) {
  int n = static_cast<int>(speeds_kmh.size());
  if (begin < 0 || end <= begin || end > n)
    throw ConfigError("train_segment: frame range [" + std::to_string(begin) +
                      ", " + std::to_string(end) + ") invalid for a clip of " +
                      std::to_string(n) + " frames");
  trace_.clear();
  nn::Rng pass_rng(pass_seed);
  nn::Pass pass{true, &pass_rng};
  PlannerState st = initial_state(clip_id);

  int count = 0;
  for (int t = begin; t < end; ++t)
    if (t + cfg_.horizon < n) ++count;
  double inv = count > 0 ? 1.0 / count : 0.0;

  std::vector<double> preds(end - begin);
  for (int t = begin; t < end; ++t)
    preds[t - begin] = step(frame_at(t), clip_id, st, pass);

  double loss = 0.0;
  for (int t = begin; t < end; ++t)
    if (t + cfg_.horizon < n) {
      double e = preds[t - begin] - speeds_kmh[t + cfg_.horizon];
      loss += e * e * inv;
    }

  int hidden = cfg_.hidden_channels;
  nn::FeatureGrid dh_main, dc_main, dh_dp, dc_dp, dh_df, dc_df;
  if (cfg_.variant == PlannerVariant::kDual) {
    dh_dp = nn::FeatureGrid(kRows, kCols, hidden);
    dc_dp = nn::FeatureGrid(kRows, kCols, hidden);
    dh_df = nn::FeatureGrid(kDualSize, kDualSize, hidden);
    dc_df = nn::FeatureGrid(kDualSize, kDualSize, hidden);
  } else {
    dh_main = nn::FeatureGrid(kRows, kCols, hidden);
    dc_main = nn::FeatureGrid(kRows, kCols, hidden);
  }
  for (int t = end - 1; t >= begin; --t) {
    double dpred = 0.0;
    if (t + cfg_.horizon < n)
      dpred = 2.0 * (preds[t - begin] - speeds_kmh[t + cfg_.horizon]) * inv;
    planner_backward(dpred * cfg_.output_scale, &dh_main, &dc_main, &dh_dp,
                     &dc_dp, &dh_df, &dc_df, static_cast<size_t>(t - begin));
  }
  trace_.clear();
  return loss;
}

void DrivingModel::visit_params(const nn::ParamVisitor& visit) {
  periph_.visit_params("periph", visit);
  if (fovea_enc_) fovea_enc_->visit_params("fovea", visit);
  if (cfg_.variant == PlannerVariant::kDual) {
    lstm_dual_periph_.visit_params("planner.periph_lstm", visit);
    lstm_dual_fovea_.visit_params("planner.fovea_lstm", visit);
  } else {
    lstm_main_.visit_params("planner.lstm", visit);
  }
  for (size_t i = 0; i < fc_.size(); ++i)
    fc_[i].visit_params("planner.fc" + std::to_string(i), visit);
  if (attention_) attention_->visit_params(visit);
}

void DrivingModel::clear_cache() {
  periph_.clear_cache();
  if (fovea_enc_) fovea_enc_->clear_cache();
  if (attention_) attention_->clear_cache();
  lstm_main_.clear_cache();
  lstm_dual_periph_.clear_cache();
  lstm_dual_fovea_.clear_cache();
  for (auto& layer : fc_) layer.clear_cache();
  trace_.clear();
}

uint64_t DrivingModel::frozen_hash() {
  return nn::param_hash([this](const nn::ParamVisitor& visit) {
    visit_params([&](const std::string& name, nn::Parameter& p) {
      if (name.find(".backbone.") != std::string::npos ||
          name.rfind("attention.", 0) == 0)
        visit(name, p);
    });
  });
}

uint64_t DrivingModel::params_hash() {
  return nn::param_hash(
      [this](const nn::ParamVisitor& v) { visit_params(v); });
}

void DrivingModel::save_checkpoint(const std::string& path,
                                   const nlohmann::json& extra_metadata) {
  nn::Checkpoint ck = nn::Checkpoint::capture(
      [this](const nn::ParamVisitor& v) { visit_params(v); });
  ck.metadata["kind"] = "driving";
  ck.metadata["config"] = cfg_.to_json();
  if (attention_)
    ck.metadata["attention_config"] = attention_->config().to_json();
  ck.metadata["frozen_hash"] = frozen_hash();
  if (extra_metadata.is_object())
    for (const auto& [key, value] : extra_metadata.items())
      ck.metadata[key] = value;
  ck.save(path);
}

DrivingModel DrivingModel::load_checkpoint(const std::string& path) {
  nn::Checkpoint ck = nn::Checkpoint::load(path);
  if (ck.metadata.value("kind", "") != "driving")
    throw ConfigError("checkpoint at " + path +
                      " is not a driving-model checkpoint");
  DrivingModel m(ModelConfig::from_json(ck.metadata.at("config")));
  if (ck.metadata.contains("attention_config"))
    m.attention_.emplace(attention::AttentionModel(
        AttentionConfig::from_json(ck.metadata.at("attention_config"))));
  ck.restore([&m](const nn::ParamVisitor& v) { m.visit_params(v); });
  if (m.attention_)
    m.attention_->visit_params(
        [](const std::string&, nn::Parameter& p) { p.trainable = false; });
  return m;
}

}  // namespace pfd::model
