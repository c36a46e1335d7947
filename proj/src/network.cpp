#include "scfl/network.hpp"

#include <cmath>
#include <string>

#include "scfl/errors.hpp"

namespace scfl {

void DelayProfile::validate() const {
  if (clients.empty()) throw ConfigError("network: no clients in delay profile");
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& link = clients[i];
    if (link.mac_rate <= 0.0 || link.uplink_rate <= 0.0) {
      throw ConfigError("network: client " + std::to_string(i) + " has nonpositive rate");
    }
    if (link.erasure_prob < 0.0 || link.erasure_prob >= 1.0) {
      throw ConfigError("network: client " + std::to_string(i) +
                        " erasure probability outside [0, 1)");
    }
  }
  if (downlink_rate <= 0.0) throw ConfigError("network: downlink_rate must be positive");
  if (server_mac_rate <= 0.0) throw ConfigError("network: server_mac_rate must be positive");
  if (n_mac_per_sample <= 0.0) throw ConfigError("network: n_mac_per_sample must be positive");
  if (payload_bits <= 0.0) throw ConfigError("network: payload_bits must be positive");
  if (model_bits <= 0.0) throw ConfigError("network: model_bits must be positive");
}

double client_compute_time(const DelayProfile& profile, std::size_t client,
                           double batch_size) {
  return batch_size * profile.n_mac_per_sample / profile.clients[client].mac_rate;
}

double server_compute_time(const DelayProfile& profile, double batch_size) {
  return batch_size * profile.n_mac_per_sample / profile.server_mac_rate;
}

std::int64_t sample_uplink_attempts(RngStream& stream, double erasure_prob) {
  if (erasure_prob <= 0.0) return 1;
  const double u = stream.next_uniform();  // [0, 1)
  // Inverse CDF: k = 1 + floor(log(1-u) / log(p)).
  const double k = std::floor(std::log1p(-u) / std::log(erasure_prob));
  return 1 + static_cast<std::int64_t>(std::max(k, 0.0));
}

EpochDelay epoch_delay(RngStream& stream, const DelayProfile& profile, std::size_t client,
                       double batch_size) {
  EpochDelay out;
  out.compute_time = client_compute_time(profile, client, batch_size);
  out.attempts = sample_uplink_attempts(stream, profile.clients[client].erasure_prob);
  const double upload = static_cast<double>(out.attempts) * profile.payload_bits /
                        profile.clients[client].uplink_rate;
  const double download = profile.model_bits / profile.downlink_rate;
  out.total_time = out.compute_time + upload + download;
  return out;
}

double arrival_probability(const DelayProfile& profile, std::size_t client,
                           double batch_size, double deadline) {
  const double slack = deadline - client_compute_time(profile, client, batch_size) -
                       profile.model_bits / profile.downlink_rate;
  const double attempt_time = profile.payload_bits / profile.clients[client].uplink_rate;
  const double k_max = std::floor(slack / attempt_time);
  if (k_max < 1.0) return 0.0;
  const double p = profile.clients[client].erasure_prob;
  if (p <= 0.0) return 1.0;
  return 1.0 - std::pow(p, k_max);
}

DelayProfile sample_profile(RngStream& stream, std::size_t n, double n_mac_per_sample,
                            double payload_bits, double model_bits) {
  if (n == 0) throw ConfigError("network: n must be positive");
  DelayProfile profile;
  profile.clients.resize(n);
  for (auto& link : profile.clients) {
    const double mu_comp = 0.1 + 0.9 * stream.next_uniform();
    const double mu_uplink = 0.3 + 0.7 * stream.next_uniform();
    link.mac_rate = mu_comp * 1'536'000.0;
    link.uplink_rate = mu_uplink * 1e6;
    link.erasure_prob = 0.1;
  }
  profile.downlink_rate = 1e6;
  profile.server_mac_rate = 15'360'000.0;
  profile.n_mac_per_sample = n_mac_per_sample;
  profile.payload_bits = payload_bits;
  profile.model_bits = model_bits;
  profile.validate();
  return profile;
}

}  // namespace scfl
