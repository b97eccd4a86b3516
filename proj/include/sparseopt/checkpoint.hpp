#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sparseopt/model.hpp"
#include "sparseopt/sparsity.hpp"

namespace sparseopt {

/// Versioned binary container: magic, version, run position, embedded
/// config, then length-prefixed named tensors and scalars as little-endian
/// 64-bit values, closed by a CRC32 of the payload. Serialization order is
/// insertion order, so save -> load -> save is byte-identical. Together
/// with the seed and epoch counter this pins the whole run state: every
/// random stream is re-derivable from (seed, purpose, epoch).
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_json;
  std::uint64_t seed = 0;
  std::uint64_t next_epoch = 0;  // first epoch still to run

  std::vector<std::pair<std::string, Tensor>> tensors;
  std::vector<std::pair<std::string, double>> scalars;
  std::vector<std::pair<std::string, std::uint64_t>> counters;

  void put_tensor(const std::string& name, const Tensor& t);
  const Tensor& get_tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;

  void put_scalar(const std::string& name, double v);
  double get_scalar(const std::string& name) const;
  bool has_scalar(const std::string& name) const;

  void put_counter(const std::string& name, std::uint64_t v);
  std::uint64_t get_counter(const std::string& name) const;
  bool has_counter(const std::string& name) const;

  /// Store every tensor of a ParamSet under "<prefix>.<name>".
  void put_param_set(const std::string& prefix, const ParamSet& ps);
  /// Gather "<prefix>.*" back into a ParamSet, prefix stripped.
  ParamSet get_param_set(const std::string& prefix) const;
  bool has_param_set(const std::string& prefix) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
/// Fully parses and CRC-checks before returning; a truncated or corrupt
/// file raises CheckpointError and leaves no partial state behind.
Checkpoint load_checkpoint(const std::string& path);

std::uint32_t crc32(const unsigned char* data, std::size_t len);

}  // namespace sparseopt
