#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pfdrive/fovea/fovea.hpp"
#include "pfdrive/model/config.hpp"
#include "pfdrive/nn/layers.hpp"
#include "pfdrive/nn/resample.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::model {

// Seed of the frozen backbone. Every model derives the backbone weights
// from this constant (not from its own seed), so all models and the
// attention predictor share bit-identical frozen features.
inline constexpr uint64_t kFrozenBackboneSeed = 0x6261636b626f6e65ull;

// Raw interleaved RGB bytes -> (h, w, 3) grid of doubles in [0, 255].
nn::FeatureGrid frame_to_grid(const std::vector<uint8_t>& rgb, int h, int w);

// Bilinear downsample to the peripheral resolution, then per-channel mean
// subtraction in RGB order. Identity resample when already at size.
nn::FeatureGrid preprocess_peripheral(const nn::FeatureGrid& frame,
                                      const PreprocConfig& pp);

// Crop rect (must lie inside the frame), bilinear resize to the foveal
// input size, mean subtraction.
nn::FeatureGrid crop_and_resize_patch(const nn::FeatureGrid& frame,
                                      const fovea::PixelRect& rect,
                                      const PreprocConfig& pp);

// A chain of conv blocks sharing one cache discipline. Backbones are plain
// conv + relu; heads add batch norm and dropout per block.
class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(const std::vector<nn::Conv2dSpec>& specs, bool batch_norm,
            double dropout, bool trainable, nn::Rng& rng);

  nn::FeatureGrid forward(const nn::FeatureGrid& x, const nn::Pass& pass);
  // Pops the most recent cached forward (LIFO across calls).
  nn::FeatureGrid backward(const nn::FeatureGrid& dy);

  void visit_params(const std::string& prefix, const nn::ParamVisitor& visit);
  void clear_cache();
  size_t layer_count() const { return blocks_.size(); }
  const nn::Conv2dSpec& spec(size_t i) const { return blocks_[i].spec(); }

 private:
  std::vector<nn::ConvBlock> blocks_;
};

// Peripheral path: frozen backbone -> trainable head -> bilinear resample
// to the 9x16 grid. The backbone always runs in eval mode (it is frozen and
// stateless), so only head layers cache for backward.
class PeripheralEncoder {
 public:
  PeripheralEncoder() = default;
  PeripheralEncoder(const ArchConfig& arch, uint64_t seed);

  // (periph_h, periph_w, 3) preprocessed input -> (9, 16, C).
  nn::FeatureGrid forward(const nn::FeatureGrid& x, const nn::Pass& pass);
  // The two halves of forward, exposed so the frozen backbone pass can be
  // shared with the attention predictor.
  nn::FeatureGrid backbone_forward(const nn::FeatureGrid& x);
  nn::FeatureGrid head_forward(const nn::FeatureGrid& feat, const nn::Pass& pass);
  // Gradient wrt the head input (backbone output); backbone is frozen so
  // propagation stops there.
  void backward(const nn::FeatureGrid& dy);

  void visit_params(const std::string& prefix, const nn::ParamVisitor& visit);
  void clear_cache();

  int in_h() const { return in_h_; }
  int in_w() const { return in_w_; }
  // Head output size before the resample to 9x16 (3x7 at standard presets).
  std::pair<int, int> pre_shape() const { return {pre_h_, pre_w_}; }
  int channels() const { return channels_; }

  ConvStack backbone;
  ConvStack head;

 private:
  int in_h_ = 0, in_w_ = 0, pre_h_ = 0, pre_w_ = 0, channels_ = 0;
};

// Foveal path: frozen backbone (same constant stream as the peripheral
// one) + trainable head mapping a preprocessed patch to a (3, 3, C) patch
// (combined mode) or (14, 14, C) patch (dual mode). One instance encodes
// every fovea of a frame, so parameters are shared by construction.
class FovealEncoder {
 public:
  FovealEncoder() = default;
  FovealEncoder(const ArchConfig& arch, bool dual_mode, uint64_t seed);

  // (patch_in, patch_in, 3) -> (out, out, C).
  nn::FeatureGrid forward(const nn::FeatureGrid& patch, const nn::Pass& pass);
  void backward(const nn::FeatureGrid& dy);

  void visit_params(const std::string& prefix, const nn::ParamVisitor& visit);
  void clear_cache();

  int in_size() const { return in_; }
  int out_size() const { return out_; }
  int channels() const { return channels_; }
  bool dual_mode() const { return dual_; }

  ConvStack backbone;
  ConvStack head;

 private:
  int in_ = 0, out_ = 0, channels_ = 0;
  bool dual_ = false;
};

}  // namespace pfd::model
