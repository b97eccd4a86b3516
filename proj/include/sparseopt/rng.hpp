#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sparseopt/tensor.hpp"

namespace sparseopt {

/// Deterministic random stream: xoshiro256++ seeded through splitmix64.
///
/// The same seed yields the same sample sequence on every platform; no
/// global state, no std::random_device, no libstdc++ distributions.
/// Independent substreams are derived functionally by key-splitting:
/// `substream(k)` mixes the parent key with k and does not advance the
/// parent, so a fixed (seed, key path) always names the same stream.
///
/// Normal samples use the Box-Muller transform; each draw consumes exactly
/// two 64-bit words (the sine half is discarded), so the stream position is
/// a pure function of the number of values drawn.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream substream(std::uint64_t key) const;

  std::uint64_t next_u64();
  double next_double();  // uniform in [0,1), 53-bit resolution
  std::uint64_t next_below(std::uint64_t bound);  // uniform in [0,bound), unbiased
  double next_gaussian(double mean, double stddev);

  Tensor gaussian(std::vector<std::size_t> shape, double mean, double stddev);
  Tensor uniform(std::vector<std::size_t> shape, double lo, double hi);

  std::vector<std::size_t> permutation(std::size_t n);
  /// k distinct indices from [0,n), in random order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t key() const { return key_; }
  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  RngStream(std::uint64_t key, std::array<std::uint64_t, 4> state)
      : key_(key), state_(state) {}
  static std::array<std::uint64_t, 4> state_from_key(std::uint64_t key);

  std::uint64_t key_;
  std::array<std::uint64_t, 4> state_;
};

/// Named substream keys used across the harness so any component can be
/// re-derived from (master seed, purpose, epoch) without serializing
/// generator positions.
namespace stream_key {
inline constexpr std::uint64_t kParamInit = 1;
inline constexpr std::uint64_t kMask = 2;
inline constexpr std::uint64_t kBatch = 3;
inline constexpr std::uint64_t kAttack = 4;
inline constexpr std::uint64_t kProbe = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kEvalAttack = 7;
inline constexpr std::uint64_t kDiagnostics = 8;
inline constexpr std::uint64_t kSnapshotSubsample = 9;
}  // namespace stream_key

}  // namespace sparseopt
