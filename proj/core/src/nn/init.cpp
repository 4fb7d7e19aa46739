#include "pfdrive/nn/init.hpp"

#include <cmath>

#include "pfdrive/errors.hpp"

namespace pfd::nn {

void xavier_init(std::vector<double>& out, int fan_in, int fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0)
    throw ConfigError("xavier_init: fans must be positive");
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : out) v = rng.uniform(-a, a);
}

std::vector<double> xavier_init(size_t count, int fan_in, int fan_out,
                                uint64_t seed) {
  if (count == 0) throw ConfigError("xavier_init: empty shape");
  std::vector<double> out(count);
  Rng rng(seed);
  xavier_init(out, fan_in, fan_out, rng);
  return out;
}

}  // namespace pfd::nn
