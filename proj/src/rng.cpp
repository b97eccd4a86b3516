#include "sparseopt/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sparseopt {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::array<std::uint64_t, 4> RngStream::state_from_key(std::uint64_t key) {
  std::array<std::uint64_t, 4> s{};
  std::uint64_t x = key;
  for (auto& w : s) w = splitmix64(x);
  return s;
}

RngStream::RngStream(std::uint64_t seed) : key_(seed), state_(state_from_key(seed)) {}

RngStream RngStream::substream(std::uint64_t key) const {
  // child key = splitmix of (parent key XOR golden-ratio-multiplied key);
  // purely functional, parent position untouched.
  std::uint64_t x = key_ ^ (key * 0x9e3779b97f4a7c15ULL + 0x6a09e667f3bcc909ULL);
  std::uint64_t child_key = splitmix64(x);
  return RngStream(child_key, state_from_key(child_key));
}

std::uint64_t RngStream::next_u64() {
  // xoshiro256++
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("next_below: bound must be positive");
  // rejection sampling on the top of the range to avoid modulo bias
  const std::uint64_t threshold = (0ULL - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

double RngStream::next_gaussian(double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("gaussian: stddev must be >= 0");
  // Box-Muller, cosine branch. u1 shifted into (0,1] so log stays finite.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  const double z = std::sqrt(-2.0 * std::log(u1)) *
                   std::cos(2.0 * std::numbers::pi * u2);
  return mean + stddev * z;
}

Tensor RngStream::gaussian(std::vector<std::size_t> shape, double mean, double stddev) {
  if (stddev < 0.0) throw std::invalid_argument("gaussian: stddev must be >= 0");
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = next_gaussian(mean, stddev);
  return t;
}

Tensor RngStream::uniform(std::vector<std::size_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * next_double();
  return t;
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = next_below(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::size_t> RngStream::sample_without_replacement(std::size_t n,
                                                               std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  // partial Fisher-Yates over an index table
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + next_below(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace sparseopt
