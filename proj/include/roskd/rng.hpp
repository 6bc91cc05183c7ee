// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

// Self-contained random number generation. The standard <random>
// distributions are implementation-defined, so every draw here is spelled
// out explicitly: the same seed yields the same stream on every platform
// and toolchain this library builds on.

namespace roskd {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256** seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    for (auto& word : state_) word = splitmix64(seed);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Modulo bias is < n / 2^64 and irrelevant here.
  std::size_t next_below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

  // Standard normal via Box-Muller; the sine branch is discarded so each
  // call consumes exactly two uniforms.
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Exp(rate) by inversion.
  double next_exponential(double rate = 1.0) {
    return -std::log1p(-next_double()) / rate;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

namespace detail {

inline std::uint64_t fnv1a_bytes(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a_mix(std::uint64_t h, std::string_view s) {
  return fnv1a_bytes(h, s.data(), s.size());
}

inline std::uint64_t fnv1a_mix(std::uint64_t h, std::uint64_t v) {
  unsigned char le[8];
  for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv1a_bytes(h, le, 8);
}

}  // namespace detail

// Seed derivation scheme: every stage and substream obtains its seed as
// derive_seed(root, "tag", indices...). The tag and indices are folded into
// an FNV-1a hash together with the root seed, then finalized with
// splitmix64. Streams derived with distinct tags are independent, so
// consuming draws in one stream never shifts another.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t root, Parts&&... parts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = detail::fnv1a_mix(h, root);
  ((h = detail::fnv1a_mix(h, std::forward<Parts>(parts))), ...);
  return splitmix64(h);
}

// Fisher-Yates, back to front.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.next_below(i)]);
  }
}

inline std::vector<int> iota_indices(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// First m entries of a partial Fisher-Yates pass over 0..n-1.
inline std::vector<int> sample_without_replacement(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<int> pool = iota_indices(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::swap(pool[i], pool[i + rng.next_below(n - i)]);
  }
  pool.resize(m);
  return pool;
}

}  // namespace roskd
