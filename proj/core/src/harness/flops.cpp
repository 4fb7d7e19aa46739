#include "pfdrive/harness/flops.hpp"

#include <algorithm>
#include <cmath>

#include "pfdrive/attention/attention_map.hpp"
#include "pfdrive/errors.hpp"

namespace pfd::harness {

void FlopsReport::add(const std::string& name, double flops) {
  items.push_back({name, flops});
  total += flops;
}

double FlopsReport::at(const std::string& name) const {
  for (const auto& it : items)
    if (it.name == name) return it.flops;
  throw ConfigError("flops report: no stage named " + name);
}

nlohmann::json FlopsReport::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& it : items)
    layers.push_back({{"name", it.name}, {"flops", it.flops}});
  return {{"layers", layers}, {"total", total}};
}

double conv_flops(const nn::Conv2dSpec& s, int in_h, int in_w) {
  auto [oh, ow] = s.out_hw(in_h, in_w);
  return 2.0 * s.kh * s.kw * s.cin * s.cout * oh * ow;
}

double dense_flops(int in, int out) { return 2.0 * in * out; }

double resample_flops(int out_h, int out_w, int channels) {
  return 8.0 * out_h * out_w * channels;
}

double convlstm_flops(int rows, int cols, int cin, int hidden, int kernel) {
  // Gate conv has same padding: output stays rows x cols. The pointwise part
  // is 4 gate nonlinearities plus the cell/hidden updates, 24 ops per cell.
  double gates = 2.0 * kernel * kernel * (cin + hidden) * (4 * hidden) * rows * cols;
  return gates + 24.0 * rows * cols * hidden;
}

double softmax_flops(int entries) { return 5.0 * entries; }

namespace {

// Walks a conv chain from (h, w), adding conv/bn/relu items per block and
// returning the output size. Backbones carry no batch norm.
std::pair<int, int> add_chain(FlopsReport& r, const std::string& prefix,
                              const std::vector<nn::Conv2dSpec>& chain, int h,
                              int w, bool batch_norm, double scale) {
  for (size_t i = 0; i < chain.size(); ++i) {
    const auto& s = chain[i];
    auto [oh, ow] = s.out_hw(h, w);
    double elems = static_cast<double>(oh) * ow * s.cout;
    r.add(prefix + ".conv" + std::to_string(i), scale * conv_flops(s, h, w));
    if (batch_norm)
      r.add(prefix + ".bn" + std::to_string(i), scale * 2.0 * elems);
    r.add(prefix + ".relu" + std::to_string(i), scale * elems);
    h = oh;
    w = ow;
  }
  return {h, w};
}

}  // namespace

FlopsReport compute_flops(const model::ModelConfig& cfg) {
  std::optional<model::AttentionConfig> att;
  if (cfg.fovea.policy == fovea::FoveaPolicy::kTopK ||
      cfg.fovea.policy == fovea::FoveaPolicy::kSampled)
    att = model::AttentionConfig::preset(cfg.arch.preset);
  return compute_flops(cfg, att);
}

FlopsReport compute_flops(
    const model::ModelConfig& cfg,
    const std::optional<model::AttentionConfig>& attention) {
  cfg.validate();
  const model::ArchConfig& a = cfg.arch;
  const int C = a.feature_channels();
  const int rows = fovea::kGridRows, cols = fovea::kGridCols;
  const int cells = rows * cols;
  FlopsReport r;

  // Peripheral path.
  int ph = a.preproc.periph_h, pw = a.preproc.periph_w;
  if (ph != a.frame_h || pw != a.frame_w)
    r.add("periph.resample", resample_flops(ph, pw, 3));
  r.add("periph.mean", static_cast<double>(ph) * pw * 3);
  auto [bh, bw] = add_chain(r, "periph.backbone", a.backbone, ph, pw,
                            /*batch_norm=*/false, 1.0);
  auto [hh, hw] = add_chain(r, "periph.head", a.periph_head, bh, bw,
                            /*batch_norm=*/true, 1.0);
  if (hh != rows || hw != cols)
    r.add("periph.head.resample", resample_flops(rows, cols, C));

  // Attention predictor (gaze-driven policies). The backbone pass is shared
  // with the peripheral path and therefore not recounted.
  bool needs_map = cfg.fovea.policy == fovea::FoveaPolicy::kTopK ||
                   cfg.fovea.policy == fovea::FoveaPolicy::kSampled;
  if (needs_map) {
    if (!attention)
      throw ConfigError("flops: gaze-driven policy needs an attention config");
    const model::AttentionConfig& ac = *attention;
    auto [ah, aw] = add_chain(r, "attention.head", a.periph_head, bh, bw,
                              /*batch_norm=*/true, 1.0);
    if (ah != rows || aw != cols)
      r.add("attention.resample", resample_flops(rows, cols, C));
    r.add("attention.lstm",
          convlstm_flops(rows, cols, C, ac.hidden_channels, ac.lstm_kernel));
    nn::Conv2dSpec out1x1;
    out1x1.cin = ac.hidden_channels;
    out1x1.cout = 1;
    r.add("attention.out", conv_flops(out1x1, rows, cols));
    r.add("attention.softmax", softmax_flops(cells));
  }

  // Foveal path, multiplied by the fovea count.
  bool uses_foveae = cfg.variant != model::PlannerVariant::kPeripheryOnly &&
                     cfg.fovea.policy != fovea::FoveaPolicy::kNone;
  if (uses_foveae) {
    double n = cfg.fovea.count;
    int pi = a.preproc.patch_in;
    if (pi != a.preproc.patch_px)
      r.add("fovea.resample", n * resample_flops(pi, pi, 3));
    r.add("fovea.mean", n * pi * pi * 3.0);
    auto [fh, fw] = add_chain(r, "fovea.backbone", a.fovea_backbone, pi, pi,
                              /*batch_norm=*/false, n);
    bool dual = cfg.variant == model::PlannerVariant::kDual;
    add_chain(r, "fovea.head", dual ? a.fovea_head_dual : a.fovea_head_combined,
              fh, fw, /*batch_norm=*/true, n);
  }

  // Recurrent planner and regression stack. Patch insertion and channel
  // concatenation move data without arithmetic and are not counted.
  int flat = 0;
  switch (cfg.variant) {
    case model::PlannerVariant::kCombined:
      r.add("planner.lstm", convlstm_flops(rows, cols, 2 * C,
                                           cfg.hidden_channels, cfg.lstm_kernel));
      flat = cells * cfg.hidden_channels;
      break;
    case model::PlannerVariant::kPeripheryOnly:
      r.add("planner.lstm", convlstm_flops(rows, cols, C, cfg.hidden_channels,
                                           cfg.lstm_kernel));
      flat = cells * cfg.hidden_channels;
      break;
    case model::PlannerVariant::kDual: {
      double n = cfg.fovea.count;
      r.add("planner.pe", n * 14.0 * 14.0 * C);
      r.add("planner.periph_lstm",
            convlstm_flops(rows, cols, C, cfg.hidden_channels, cfg.lstm_kernel));
      r.add("planner.fovea_lstm",
            convlstm_flops(14, 14, 2 * C, cfg.hidden_channels, cfg.lstm_kernel));
      flat = (cells + 14 * 14) * cfg.hidden_channels;
      break;
    }
  }
  int in = flat;
  for (size_t i = 0; i < cfg.fc_widths.size(); ++i) {
    int out = cfg.fc_widths[i];
    r.add("planner.fc" + std::to_string(i), dense_flops(in, out));
    if (i + 1 < cfg.fc_widths.size())
      r.add("planner.fc" + std::to_string(i) + ".relu", out);
    in = out;
  }
  r.add("planner.output", 2.0);
  return r;
}

// ------------------------------------------------------- uni-res matching --

UniResResult build_uniresolution_baseline(const model::ModelConfig& reference) {
  return build_uniresolution_baseline(reference, compute_flops(reference).total);
}

UniResResult build_uniresolution_baseline(const model::ModelConfig& reference,
                                          double target_flops) {
  reference.validate();
  if (!(target_flops > 0.0))
    throw ConfigError("uniresolution search: target FLOPs must be positive");

  model::ModelConfig base = reference;
  base.variant = model::PlannerVariant::kPeripheryOnly;
  base.fovea.policy = fovea::FoveaPolicy::kNone;

  UniResResult best;
  best.target = target_flops;
  bool found = false;
  for (int h = fovea::kGridRows; h <= reference.arch.frame_h; ++h) {
    double exact = 16.0 * h / 9.0;
    int wopts[2] = {static_cast<int>(std::floor(exact)),
                    static_cast<int>(std::ceil(exact))};
    for (int k = 0; k < 2; ++k) {
      int w = wopts[k];
      if (k > 0 && w == wopts[0]) continue;
      if (w < fovea::kGridCols || w > reference.arch.frame_w) continue;
      model::ModelConfig cand = base;
      cand.arch.preproc.periph_h = h;
      cand.arch.preproc.periph_w = w;
      double f;
      try {
        f = compute_flops(cand).total;
      } catch (const ShapeError&) {
        continue;  // chain collapses at this resolution
      }
      if (f > target_flops) continue;
      if (!found || f > best.flops) {
        found = true;
        best.config = cand;
        best.flops = f;
        best.periph_h = h;
        best.periph_w = w;
      }
    }
  }
  if (!found)
    throw ConfigError("uniresolution search: no resolution fits the target");
  if (best.flops < 0.98 * target_flops)
    throw ConfigError(
        "uniresolution search: best candidate misses the 2% FLOPs window "
        "(best " + std::to_string(best.flops) + ", target " +
        std::to_string(target_flops) + ")");
  return best;
}

}  // namespace pfd::harness
