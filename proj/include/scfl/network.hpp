#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scfl/rng.hpp"

namespace scfl {

struct ClientLink {
  double mac_rate = 0.0;      // MAC operations per second
  double uplink_rate = 0.0;   // bits per second
  double erasure_prob = 0.0;  // per-attempt loss probability, in [0, 1)
};

// Per-epoch time for client i: t_i(b) = b * n_mac / mac_rate_i
//                                       + attempts * payload / uplink_i
//                                       + model / downlink,
// with attempts geometric in the erasure probability. The downlink broadcast
// is reliable and the server never straggles against its own deadline.
struct DelayProfile {
  std::vector<ClientLink> clients;
  double downlink_rate = 1e6;           // bits per second
  double server_mac_rate = 15'360'000;  // MAC per second
  double n_mac_per_sample = 1536.0;     // MAC operations per data sample
  double payload_bits = 0.0;            // bits per gradient upload
  double model_bits = 0.0;              // bits per model broadcast

  std::size_t n_clients() const { return clients.size(); }
  void validate() const;  // throws ConfigError
};

double client_compute_time(const DelayProfile& profile, std::size_t client,
                           double batch_size);
double server_compute_time(const DelayProfile& profile, double batch_size);

// Attempts until the first successful upload; P(k) = p^(k-1) (1 - p).
std::int64_t sample_uplink_attempts(RngStream& stream, double erasure_prob);

struct EpochDelay {
  double compute_time = 0.0;
  std::int64_t attempts = 1;
  double total_time = 0.0;
};

EpochDelay epoch_delay(RngStream& stream, const DelayProfile& profile, std::size_t client,
                       double batch_size);

// Closed form for P(t_i(b) <= T): with k_max full attempts fitting in the
// remaining window, 1 - p^k_max (0 when no attempt fits).
double arrival_probability(const DelayProfile& profile, std::size_t client,
                           double batch_size, double deadline);

// Edge-environment recipe: uplink U(0.3, 1) Mbps, MAC rate U(0.1, 1) x 1536
// KMAC/s, erasure 0.1, downlink 1 Mbps, server 15360 KMAC/s.
DelayProfile sample_profile(RngStream& stream, std::size_t n, double n_mac_per_sample,
                            double payload_bits, double model_bits);

}  // namespace scfl
