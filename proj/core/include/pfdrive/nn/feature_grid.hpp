#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "pfdrive/errors.hpp"

namespace pfd::nn {

// Dense H x W x C array of doubles, row-major in (height, width, channel)
// order. This is the one tensor type used throughout: encoder feature maps,
// attention logits, foveal patches and gradients are all FeatureGrids.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureGrid() = default;
  FeatureGrid(int h, int w, int c)
      : height(h), width(w), channels(c), values(checked_size(h, w, c), 0.0) {}

  static FeatureGrid zeros(int h, int w, int c) { return FeatureGrid(h, w, c); }

  size_t size() const { return values.size(); }

  double& at(int i, int j, int c) {
    return values[(static_cast<size_t>(i) * width + j) * channels + c];
  }
  double at(int i, int j, int c) const {
    return values[(static_cast<size_t>(i) * width + j) * channels + c];
  }

  // Pointer to the channel vector at cell (i, j).
  double* cell(int i, int j) {
    return values.data() + (static_cast<size_t>(i) * width + j) * channels;
  }
  const double* cell(int i, int j) const {
    return values.data() + (static_cast<size_t>(i) * width + j) * channels;
  }

  bool same_shape(const FeatureGrid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  std::string shape_str() const {
    return "(" + std::to_string(height) + ", " + std::to_string(width) + ", " +
           std::to_string(channels) + ")";
  }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { values.assign(values.size(), v); }

 private:
  static size_t checked_size(int h, int w, int c) {
    if (h <= 0 || w <= 0 || c <= 0)
      throw ShapeError("FeatureGrid: non-positive shape (" + std::to_string(h) +
                       ", " + std::to_string(w) + ", " + std::to_string(c) +
                       ")");
    return static_cast<size_t>(h) * w * c;
  }
};

inline void require_shape(const FeatureGrid& g, int h, int w, int c,
                          const char* what) {
  if (g.height != h || g.width != w || g.channels != c)
    throw ShapeError(std::string(what) + ": expected (" + std::to_string(h) +
                     ", " + std::to_string(w) + ", " + std::to_string(c) +
                     "), got " + g.shape_str());
}

}  // namespace pfd::nn
