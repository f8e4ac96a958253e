#pragma once

// Portable deterministic randomness. Standard-library distributions are
// implementation-defined, so sampling helpers here are written against the raw
// 64-bit engine to keep outputs identical across toolchains.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace spc {

std::uint64_t splitmix64(std::uint64_t x);

// Order-sensitive seed derivation: derive_seed(s, a, b) != derive_seed(s, b, a).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t first, Tags... rest) {
  if constexpr (sizeof...(rest) == 0) {
    return derive_seed(base, first);
  } else {
    return derive_seed(derive_seed(base, first), static_cast<std::uint64_t>(rest)...);
  }
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n), unbiased (rejection sampling).
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(i)]);
  }

  // k distinct indices from [0, n) without replacement, in sampled order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

// Deterministic uniform value in [0, 1) from a string key (no engine state).
double hash_unit(std::string_view key);

// Index sampled from a probability vector with a single uniform draw u.
std::size_t sample_categorical(std::span<const double> probs, double u);

}  // namespace spc
