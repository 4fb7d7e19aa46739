#pragma once

#include "pfdrive/nn/feature_grid.hpp"

namespace pfd::nn {

// Bilinear resampling with half-pixel centers: a target pixel y maps to
// source coordinate (y + 0.5) * (in / out) - 0.5, clamped to the source
// range. Identity when target size equals source size. Used for image
// downsampling, the 3x7 -> 9x16 feature upsample and the medium-resolution
// encoder's output downsample.
FeatureGrid resample_bilinear(const FeatureGrid& in, int out_h, int out_w);

// Gradient of resample_bilinear with respect to its input: scatters each
// output gradient back onto the source taps with the same weights.
FeatureGrid resample_bilinear_backward(const FeatureGrid& dout, int in_h,
                                       int in_w);

}  // namespace pfd::nn
