#pragma once

#include <cstdint>
#include <random>

namespace backsim {

/// Source of uniform variates in [0, 1). The simulator draws exactly one
/// variate per random choice, so tests can substitute a scripted source.
class UniformSource {
 public:
  virtual ~UniformSource() = default;
  virtual double next_uniform() = 0;
};

/// Deterministic pseudorandom stream seeded by a 64-bit value.
class RandomStream final : public UniformSource {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  // 53 high bits of the engine output; std::generate_canonical is not
  // specified tightly enough to be reproducible across standard libraries.
  double next_uniform() override { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer, used to derive independent per-run seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for run `run` of method `method` in an experiment with `base` seed:
/// mix64(mix64(mix64(base) ^ method) ^ run).
constexpr std::uint64_t derive_run_seed(std::uint64_t base, std::uint64_t method, std::uint64_t run) {
  return mix64(mix64(mix64(base) ^ method) ^ run);
}

}  // namespace backsim
