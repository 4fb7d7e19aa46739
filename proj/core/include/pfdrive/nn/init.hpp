#pragma once

#include <cstdint>
#include <vector>

#include "pfdrive/nn/rng.hpp"

namespace pfd::nn {

// Xavier (Glorot) uniform initialization: U(-a, a) with
// a = sqrt(6 / (fan_in + fan_out)), giving variance 2 / (fan_in + fan_out).
// Deterministic given the rng stream.
void xavier_init(std::vector<double>& out, int fan_in, int fan_out, Rng& rng);

// Convenience overload seeding its own stream.
std::vector<double> xavier_init(size_t count, int fan_in, int fan_out,
                                uint64_t seed);

}  // namespace pfd::nn
