#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace pdsim::sim {

// Named, seeded sub-streams: each consumer (predictor, trace generator, ...)
// derives its own generator from (seed, stream name), so adding a consumer
// never perturbs the draws seen by the others. Identical seed + identical
// configuration yields bit-identical sequences.
class RngStream {
 public:
  RngStream(uint64_t seed, std::string_view stream_name)
      : engine_(mix(seed, fnv1a(stream_name))) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1). Derived directly from the top 53 bits so the result
  // does not depend on the standard library's distribution implementation.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Exponential with the given rate (events per unit); used for Poisson gaps.
  double next_exponential(double rate) {
    double u;
    do {
      u = next_double();
    } while (u <= 0.0);
    return -std::log(u) / rate;
  }

 private:
  static constexpr uint64_t fnv1a(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (char c : s) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ull;
    }
    return h;
  }

  // SplitMix64 finalizer over seed ^ stream hash.
  static uint64_t mix(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (stream + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

struct RngState {
  uint64_t seed = 0;

  RngStream stream(std::string_view name) const { return RngStream(seed, name); }
};

}  // namespace pdsim::sim
