// Seeded random streams. Every source of randomness in the pipeline is a
// named sub-stream derived from one master seed, so any run is reproducible
// from (seed, stream name, indices) alone. The uniform/normal conversions are
// written out explicitly instead of using std::*_distribution, whose output
// is implementation-defined; this keeps byte-identical artifacts a portable
// contract rather than a toolchain accident.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace seqdistill {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace detail

class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : engine_(state) {}

  // Derives an independent stream from a master seed, a stream name and an
  // arbitrary list of indices (layer, epoch, sequence, ...).
  static RngStream derive(std::uint64_t seed, std::string_view name,
                          std::initializer_list<std::uint64_t> indices = {}) {
    std::uint64_t h = seed;
    for (char ch : name) h = detail::mix(h, static_cast<std::uint64_t>(ch));
    for (std::uint64_t v : indices) h = detail::mix(h, v);
    std::uint64_t s = h;
    return RngStream(detail::splitmix64(s));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, cosine branch only: consumes two draws per value, fixed order.
  double normal(double mean, double stddev) {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    return mean + stddev * z;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace seqdistill
