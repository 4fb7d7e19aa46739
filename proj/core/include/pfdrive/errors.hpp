#pragma once

#include <stdexcept>
#include <string>

namespace pfd {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape violations. Message carries a shape diagnostic.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid model/world/run configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Recurrent state used across clip boundaries, or backward without forward.
struct StateError : Error {
  using Error::Error;
};

// Dataset I/O errors, one class per kind so callers can tell them apart.
struct DatasetError : Error {
  using Error::Error;
};
struct ManifestMissingError : DatasetError {
  using DatasetError::DatasetError;
};
struct VersionMismatchError : DatasetError {
  using DatasetError::DatasetError;
};
struct CorruptFrameError : DatasetError {
  using DatasetError::DatasetError;
};

}  // namespace pfd
