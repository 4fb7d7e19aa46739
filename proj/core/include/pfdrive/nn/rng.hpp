#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pfd::nn {

// Deterministic RNG. mt19937_64 with hand-rolled value extraction so streams
// are bit-reproducible across standard libraries (std::*_distribution is
// implementation-defined and must not be used anywhere in the project).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t bits() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
  // always tiny relative to 2^64, so the bias is far below anything the
  // statistical tests in this project can resolve.
  int uniform_int(int n) {
    return static_cast<int>(engine_() % static_cast<uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (polar form avoided to keep the draw
  // count per call fixed).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derives an independent child stream from a seed and a label, so that
  // e.g. per-clip or per-layer streams do not depend on call order.
  static Rng derive(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    return Rng(mix(seed, tag, index));
  }

  static uint64_t mix(uint64_t seed, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    auto feed = [&h](uint64_t x) {
      for (int i = 0; i < 8; ++i) {
        h ^= (x >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    feed(seed);
    for (char ch : tag) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
    feed(index);
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pfd::nn
