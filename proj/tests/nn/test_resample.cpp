#include <doctest.h>

#include <cmath>

#include "pfdrive/nn/resample.hpp"
#include "pfdrive/nn/rng.hpp"

using pfd::nn::FeatureGrid;
using pfd::nn::resample_bilinear;
using pfd::nn::resample_bilinear_backward;
using pfd::nn::Rng;

namespace {

FeatureGrid random_grid(int h, int w, int c, Rng& rng) {
  FeatureGrid g(h, w, c);
  for (double& v : g.values) v = rng.uniform(-1.0, 1.0);
  return g;
}

}  // namespace

TEST_CASE("2x2 -> 3x3 upsample, hand-computed") {
  // Half-pixel mapping of a 3-wide axis onto a 2-wide one lands at source
  // coordinates 0, 0.5, 1 after clamping.
  FeatureGrid in(2, 2, 1);
  in.at(0, 0, 0) = 0.0;
  in.at(0, 1, 0) = 1.0;
  in.at(1, 0, 0) = 2.0;
  in.at(1, 1, 0) = 3.0;
  FeatureGrid out = resample_bilinear(in, 3, 3);
  const double want[3][3] = {
      {0.0, 0.5, 1.0}, {1.0, 1.5, 2.0}, {2.0, 2.5, 3.0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(out.at(i, j, 0) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("4x4 -> 2x2 downsample averages 2x2 blocks") {
  // With a factor-2 reduction each target center lands exactly between two
  // source pixels on each axis, so the result is the block mean.
  FeatureGrid in(4, 4, 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) in.at(i, j, 0) = i * 4 + j;
  FeatureGrid out = resample_bilinear(in, 2, 2);
  CHECK(out.at(0, 0, 0) == doctest::Approx(2.5));   // mean of 0,1,4,5
  CHECK(out.at(0, 1, 0) == doctest::Approx(4.5));   // 2,3,6,7
  CHECK(out.at(1, 0, 0) == doctest::Approx(10.5));  // 8,9,12,13
  CHECK(out.at(1, 1, 0) == doctest::Approx(12.5));
}

TEST_CASE("identity when sizes match") {
  Rng rng(1);
  FeatureGrid in = random_grid(5, 7, 3, rng);
  FeatureGrid out = resample_bilinear(in, 5, 7);
  for (size_t i = 0; i < in.size(); ++i) CHECK(out.values[i] == in.values[i]);
}

TEST_CASE("constant input stays constant at any size") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    int h = 1 + rng.uniform_int(8);
    int w = 1 + rng.uniform_int(8);
    int oh = 1 + rng.uniform_int(12);
    int ow = 1 + rng.uniform_int(12);
    FeatureGrid in(h, w, 2);
    in.fill(3.25);
    FeatureGrid out = resample_bilinear(in, oh, ow);
    for (double v : out.values) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("resample is linear in its input") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(100 + seed);
    int h = 2 + rng.uniform_int(6);
    int w = 2 + rng.uniform_int(6);
    FeatureGrid a = random_grid(h, w, 2, rng);
    FeatureGrid b = random_grid(h, w, 2, rng);
    FeatureGrid sum(h, w, 2);
    for (size_t i = 0; i < sum.size(); ++i)
      sum.values[i] = 2.0 * a.values[i] + 3.0 * b.values[i];
    FeatureGrid ra = resample_bilinear(a, 9, 5);
    FeatureGrid rb = resample_bilinear(b, 9, 5);
    FeatureGrid rsum = resample_bilinear(sum, 9, 5);
    for (size_t i = 0; i < rsum.size(); ++i)
      CHECK(rsum.values[i] ==
            doctest::Approx(2.0 * ra.values[i] + 3.0 * rb.values[i])
                .epsilon(1e-12));
  }
}

TEST_CASE("backward is the transpose of forward") {
  // <R x, y> == <x, R^T y> for random x, y, over assorted shapes.
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(200 + seed);
    int h = 1 + rng.uniform_int(7);
    int w = 1 + rng.uniform_int(7);
    int oh = 1 + rng.uniform_int(10);
    int ow = 1 + rng.uniform_int(10);
    FeatureGrid x = random_grid(h, w, 3, rng);
    FeatureGrid y = random_grid(oh, ow, 3, rng);
    FeatureGrid rx = resample_bilinear(x, oh, ow);
    FeatureGrid rty = resample_bilinear_backward(y, h, w);
    double lhs = 0.0, rhs = 0.0;
    for (size_t i = 0; i < rx.size(); ++i) lhs += rx.values[i] * y.values[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x.values[i] * rty.values[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}
