#pragma once

#include <cstdint>

namespace scfl {

// Purpose tag of a labeled random stream. Streams for distinct labels are
// derived by hashing, so adding clients or epochs never perturbs the draws
// of any other stream.
enum class Stream : std::uint32_t {
  DataFeatures = 1,
  DataNoise = 2,
  DataTruth = 3,
  DataPartition = 4,
  RffmProjection = 5,
  CodingProjection = 6,
  CodingNoise = 7,
  NetworkProfile = 8,
  Delay = 9,
  ServerSampling = 10,
  ClientSampling = 11,
  Probe = 12,
  Trial = 13,
};

// Counter-free splittable generator (splitmix64 core). Deterministic given
// the derived state; single-owner, not shared across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t state) : state_(state) {}

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double next_uniform();

  // Standard normal via Box-Muller; the spare deviate is cached.
  double next_gaussian();

  bool next_bernoulli(double prob) { return next_uniform() < prob; }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Derives independent streams from (root_seed, purpose, a, b). Identical
// labels yield identical draw sequences across runs.
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t root_seed) : root_seed_(root_seed) {}

  RngStream stream(Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0) const;

  std::uint64_t root_seed() const { return root_seed_; }

 private:
  std::uint64_t root_seed_;
};

}  // namespace scfl
