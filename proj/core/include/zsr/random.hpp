#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace zsr {

// std::mt19937_64's output sequence is fixed by the standard; the library's
// distributions are not, so every draw goes through the helpers below to keep
// generated data byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n); n must be > 0. Rejection sampling, no bias.
  std::size_t index(std::size_t n);

  // Standard normal (Box-Muller; the spare value is cached).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent seed for a named sub-stream ("train", "stream",
// "synth", ...) from a root seed.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name);

// 64-bit FNV-1a, used for config hashes.
std::uint64_t fnv1a64(std::string_view text);

}  // namespace zsr
