#include "pfdrive/model/encoders.hpp"

namespace pfd::model {

nn::FeatureGrid frame_to_grid(const std::vector<uint8_t>& rgb, int h, int w) {
  nn::FeatureGrid g(h, w, 3);
  if (rgb.size() != g.size())
    throw ShapeError("frame_to_grid: byte count " + std::to_string(rgb.size()) +
                     " does not match " + g.shape_str());
  for (size_t i = 0; i < rgb.size(); ++i)
    g.values[i] = static_cast<double>(rgb[i]);
  return g;
}

namespace {

void subtract_mean(nn::FeatureGrid& g, const std::array<double, 3>& mean) {
  for (size_t i = 0; i < g.values.size(); i += 3) {
    g.values[i] -= mean[0];
    g.values[i + 1] -= mean[1];
    g.values[i + 2] -= mean[2];
  }
}

}  // namespace

nn::FeatureGrid preprocess_peripheral(const nn::FeatureGrid& frame,
                                      const PreprocConfig& pp) {
  if (frame.channels != 3)
    throw ShapeError("preprocess_peripheral: expected 3 channels, got " +
                     frame.shape_str());
  nn::FeatureGrid low = nn::resample_bilinear(frame, pp.periph_h, pp.periph_w);
  subtract_mean(low, pp.channel_mean);
  return low;
}

nn::FeatureGrid crop_and_resize_patch(const nn::FeatureGrid& frame,
                                      const fovea::PixelRect& rect,
                                      const PreprocConfig& pp) {
  if (frame.channels != 3)
    throw ShapeError("crop_and_resize_patch: expected 3 channels, got " +
                     frame.shape_str());
  if (rect.top < 0 || rect.left < 0 || rect.bottom > frame.height ||
      rect.right > frame.width || rect.bottom <= rect.top ||
      rect.right <= rect.left)
    throw ShapeError("crop_and_resize_patch: rectangle [" +
                     std::to_string(rect.top) + ", " + std::to_string(rect.bottom) +
                     ") x [" + std::to_string(rect.left) + ", " +
                     std::to_string(rect.right) + ") outside frame " +
                     frame.shape_str());
  nn::FeatureGrid crop(rect.bottom - rect.top, rect.right - rect.left, 3);
  for (int i = 0; i < crop.height; ++i)
    for (int j = 0; j < crop.width; ++j) {
      const double* src = frame.cell(rect.top + i, rect.left + j);
      double* dst = crop.cell(i, j);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  nn::FeatureGrid patch = nn::resample_bilinear(crop, pp.patch_in, pp.patch_in);
  subtract_mean(patch, pp.channel_mean);
  return patch;
}

// -------------------------------------------------------------- ConvStack --

ConvStack::ConvStack(const std::vector<nn::Conv2dSpec>& specs, bool batch_norm,
                     double dropout, bool trainable, nn::Rng& rng) {
  blocks_.reserve(specs.size());
  for (const auto& s : specs)
    blocks_.emplace_back(s, batch_norm, dropout, /*relu=*/true, trainable, rng);
}

nn::FeatureGrid ConvStack::forward(const nn::FeatureGrid& x,
                                   const nn::Pass& pass) {
  nn::FeatureGrid h = x;
  for (auto& b : blocks_) h = b.forward(h, pass);
  return h;
}

nn::FeatureGrid ConvStack::backward(const nn::FeatureGrid& dy) {
  nn::FeatureGrid d = dy;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
    d = it->backward(d);
  return d;
}

void ConvStack::visit_params(const std::string& prefix,
                             const nn::ParamVisitor& visit) {
  for (size_t i = 0; i < blocks_.size(); ++i)
    blocks_[i].visit_params(prefix + ".conv" + std::to_string(i), visit);
}

void ConvStack::clear_cache() {
  for (auto& b : blocks_) b.clear_cache();
}

// ---------------------------------------------------- PeripheralEncoder --

PeripheralEncoder::PeripheralEncoder(const ArchConfig& arch, uint64_t seed) {
  arch.validate();
  in_h_ = arch.preproc.periph_h;
  in_w_ = arch.preproc.periph_w;
  channels_ = arch.feature_channels();
  auto [ph, pw] = arch.periph_pre_shape();
  pre_h_ = ph;
  pre_w_ = pw;
  nn::Rng bb_rng = nn::Rng::derive(kFrozenBackboneSeed, "backbone");
  backbone = ConvStack(arch.backbone, /*batch_norm=*/false, 0.0,
                       /*trainable=*/false, bb_rng);
  nn::Rng head_rng = nn::Rng::derive(seed, "periph_head");
  head = ConvStack(arch.periph_head, /*batch_norm=*/true, arch.dropout,
                   /*trainable=*/true, head_rng);
}

nn::FeatureGrid PeripheralEncoder::forward(const nn::FeatureGrid& x,
                                           const nn::Pass& pass) {
  return head_forward(backbone_forward(x), pass);
}

nn::FeatureGrid PeripheralEncoder::backbone_forward(const nn::FeatureGrid& x) {
  nn::require_shape(x, in_h_, in_w_, 3, "peripheral encoder input");
  // Frozen and stateless, so the backbone never caches.
  return backbone.forward(x, nn::eval_pass());
}

nn::FeatureGrid PeripheralEncoder::head_forward(const nn::FeatureGrid& feat,
                                                const nn::Pass& pass) {
  nn::FeatureGrid y = head.forward(feat, pass);
  nn::require_shape(y, pre_h_, pre_w_, channels_, "peripheral head output");
  return nn::resample_bilinear(y, fovea::kGridRows, fovea::kGridCols);
}

void PeripheralEncoder::backward(const nn::FeatureGrid& dy) {
  nn::require_shape(dy, fovea::kGridRows, fovea::kGridCols, channels_,
                    "peripheral encoder gradient");
  nn::FeatureGrid d = nn::resample_bilinear_backward(dy, pre_h_, pre_w_);
  head.backward(d);
}

void PeripheralEncoder::visit_params(const std::string& prefix,
                                     const nn::ParamVisitor& visit) {
  backbone.visit_params(prefix + ".backbone", visit);
  head.visit_params(prefix + ".head", visit);
}

void PeripheralEncoder::clear_cache() {
  backbone.clear_cache();
  head.clear_cache();
}

// -------------------------------------------------------- FovealEncoder --

FovealEncoder::FovealEncoder(const ArchConfig& arch, bool dual_mode,
                             uint64_t seed) {
  arch.validate();
  in_ = arch.preproc.patch_in;
  out_ = dual_mode ? 14 : 3;
  channels_ = arch.feature_channels();
  dual_ = dual_mode;
  // The foveal backbone is frozen like the peripheral one and drawn from
  // the same constant stream, so equal specs give bit-identical weights.
  nn::Rng bb_rng = nn::Rng::derive(kFrozenBackboneSeed, "backbone");
  backbone = ConvStack(arch.fovea_backbone, /*batch_norm=*/false, 0.0,
                       /*trainable=*/false, bb_rng);
  nn::Rng head_rng = nn::Rng::derive(seed, "fovea_head");
  head = ConvStack(dual_mode ? arch.fovea_head_dual : arch.fovea_head_combined,
                   /*batch_norm=*/true, arch.dropout, /*trainable=*/true,
                   head_rng);
}

nn::FeatureGrid FovealEncoder::forward(const nn::FeatureGrid& patch,
                                       const nn::Pass& pass) {
  nn::require_shape(patch, in_, in_, 3, "foveal encoder input");
  nn::FeatureGrid feat = backbone.forward(patch, nn::eval_pass());
  feat = head.forward(feat, pass);
  nn::require_shape(feat, out_, out_, channels_, "foveal encoder output");
  return feat;
}

void FovealEncoder::backward(const nn::FeatureGrid& dy) {
  nn::require_shape(dy, out_, out_, channels_, "foveal encoder gradient");
  head.backward(dy);
}

void FovealEncoder::visit_params(const std::string& prefix,
                                 const nn::ParamVisitor& visit) {
  backbone.visit_params(prefix + ".backbone", visit);
  head.visit_params(prefix + ".head", visit);
}

void FovealEncoder::clear_cache() {
  backbone.clear_cache();
  head.clear_cache();
}

}  // namespace pfd::model
