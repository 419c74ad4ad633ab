#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ebsde {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream number `stream` under the master `seed`.
/// Streams depend only on (seed, stream), so a path simulated on any thread
/// sees the same increments.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Derives a child seed for a named purpose (training set, evaluation set,
/// repetition r, ...) so that distinct experiment parts never share streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  return splitmix64(seed ^ splitmix64(purpose * 0xD1B54A32D192ED03ULL + 1));
}

class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream) : engine_(stream_seed(seed, stream)) {}

  double standard() { return normal_(engine_); }

  /// N(0, variance) draw scaled from a standard normal.
  double scaled(double stddev) { return stddev * normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace ebsde
