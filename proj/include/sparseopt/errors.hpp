#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparseopt {

/// Shape or dimension mismatch between tensors.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A gradient or loss became NaN/Inf. The training loop attaches
/// epoch/iteration context before recording the fault.
struct NonFiniteError : std::runtime_error {
  NonFiniteError(std::string what, std::size_t epoch, std::size_t iteration)
      : std::runtime_error(std::move(what)), epoch(epoch), iteration(iteration) {}
  explicit NonFiniteError(std::string what) : std::runtime_error(std::move(what)) {}
  std::size_t epoch = 0;
  std::size_t iteration = 0;
};

/// Config failed validation; message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Checkpoint file is corrupt, truncated, or has the wrong version.
struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Pearson correlation requested on a zero-variance vector.
struct UndefinedCorrelationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sparseopt
