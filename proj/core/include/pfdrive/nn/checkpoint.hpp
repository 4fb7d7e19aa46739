#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/nn/param.hpp"

namespace pfd::nn {

// Parameter checkpoint container: a JSON manifest (format version, entry
// table, free-form metadata) followed by all arrays as little-endian
// doubles. Entries are written in sorted name order so identical models
// produce byte-identical files.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  std::map<std::string, std::vector<double>> entries;
  nlohmann::json metadata = nlohmann::json::object();

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Captures every parameter of a model (values only, trainable or not).
  static Checkpoint capture(
      const std::function<void(const ParamVisitor&)>& visit_model);

  // Writes entries back into a model. Every model parameter must be present
  // with a matching size; unknown entry names are an error.
  void restore(const std::function<void(const ParamVisitor&)>& visit_model) const;
};

// FNV-1a over the raw bytes of all parameter values, in sorted name order.
// Used by the frozen-parameter tests and the attention checkpoint metadata.
uint64_t param_hash(const std::function<void(const ParamVisitor&)>& visit_model);

}  // namespace pfd::nn
