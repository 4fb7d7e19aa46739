#include "pfdrive/nn/resample.hpp"

#include <algorithm>
#include <cmath>

namespace pfd::nn {

namespace {

struct Tap {
  int lo;
  int hi;
  double w_hi;  // weight of hi tap; lo gets 1 - w_hi
};

Tap tap_for(int out_idx, int out_n, int in_n) {
  double src = (out_idx + 0.5) * (static_cast<double>(in_n) / out_n) - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
  int lo = static_cast<int>(std::floor(src));
  int hi = std::min(lo + 1, in_n - 1);
  return {lo, hi, src - lo};
}

}  // namespace

FeatureGrid resample_bilinear(const FeatureGrid& in, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw ShapeError("resample_bilinear: non-positive target size");
  if (out_h == in.height && out_w == in.width) return in;

  FeatureGrid out(out_h, out_w, in.channels);
  const int C = in.channels;
  for (int i = 0; i < out_h; ++i) {
    Tap ty = tap_for(i, out_h, in.height);
    for (int j = 0; j < out_w; ++j) {
      Tap tx = tap_for(j, out_w, in.width);
      const double* a = in.cell(ty.lo, tx.lo);
      const double* b = in.cell(ty.lo, tx.hi);
      const double* c = in.cell(ty.hi, tx.lo);
      const double* d = in.cell(ty.hi, tx.hi);
      double* o = out.cell(i, j);
      double w00 = (1.0 - ty.w_hi) * (1.0 - tx.w_hi);
      double w01 = (1.0 - ty.w_hi) * tx.w_hi;
      double w10 = ty.w_hi * (1.0 - tx.w_hi);
      double w11 = ty.w_hi * tx.w_hi;
      for (int ch = 0; ch < C; ++ch)
        o[ch] = w00 * a[ch] + w01 * b[ch] + w10 * c[ch] + w11 * d[ch];
    }
  }
  return out;
}

FeatureGrid resample_bilinear_backward(const FeatureGrid& dout, int in_h,
                                       int in_w) {
  if (dout.height == in_h && dout.width == in_w) return dout;

  FeatureGrid din(in_h, in_w, dout.channels);
  const int C = dout.channels;
  for (int i = 0; i < dout.height; ++i) {
    Tap ty = tap_for(i, dout.height, in_h);
    for (int j = 0; j < dout.width; ++j) {
      Tap tx = tap_for(j, dout.width, in_w);
      const double* g = dout.cell(i, j);
      double w00 = (1.0 - ty.w_hi) * (1.0 - tx.w_hi);
      double w01 = (1.0 - ty.w_hi) * tx.w_hi;
      double w10 = ty.w_hi * (1.0 - tx.w_hi);
      double w11 = ty.w_hi * tx.w_hi;
      double* a = din.cell(ty.lo, tx.lo);
      double* b = din.cell(ty.lo, tx.hi);
      double* c = din.cell(ty.hi, tx.lo);
      double* d = din.cell(ty.hi, tx.hi);
      for (int ch = 0; ch < C; ++ch) {
        a[ch] += w00 * g[ch];
        b[ch] += w01 * g[ch];
        c[ch] += w10 * g[ch];
        d[ch] += w11 * g[ch];
      }
    }
  }
  return din;
}

}  // namespace pfd::nn
