#include <cmath>

#include "doctest.h"
#include "scfl/errors.hpp"
#include "scfl/network.hpp"

using namespace scfl;

namespace {

DelayProfile uniform_profile(std::size_t n, double mac_rate, double uplink, double erasure,
                             double payload, double model) {
  DelayProfile profile;
  profile.clients.assign(n, ClientLink{mac_rate, uplink, erasure});
  profile.downlink_rate = 1e6;
  profile.server_mac_rate = 15'360'000.0;
  profile.n_mac_per_sample = 1536.0;
  profile.payload_bits = payload;
  profile.model_bits = model;
  return profile;
}

}  // namespace

TEST_CASE("compute time formula") {
  const DelayProfile profile = uniform_profile(1, 1'536'000.0, 4e5, 0.1, 1e5, 1e5);
  CHECK(client_compute_time(profile, 0, 0.0) == 0.0);
  CHECK(client_compute_time(profile, 0, 512.0) == doctest::Approx(0.512).epsilon(1e-12));
  // Server at 15360 KMAC/s is ten times a 1536 KMAC/s client.
  CHECK(server_compute_time(profile, 512.0) ==
        doctest::Approx(0.0512).epsilon(1e-12));
}

TEST_CASE("geometric attempt sampling") {
  StreamFactory streams(301);
  {
    RngStream stream = streams.stream(Stream::Delay, 0, 0);
    for (int i = 0; i < 100; ++i) CHECK(sample_uplink_attempts(stream, 0.0) == 1);
  }
  {
    RngStream stream = streams.stream(Stream::Delay, 0, 1);
    const std::size_t trials = 100000;
    double sum = 0.0;
    std::size_t within_two = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::int64_t attempts = sample_uplink_attempts(stream, 0.1);
      CHECK(attempts >= 1);
      sum += static_cast<double>(attempts);
      if (attempts <= 2) ++within_two;
    }
    const double mean = sum / static_cast<double>(trials);
    CHECK(std::fabs(mean - 1.0 / 0.9) < 0.02);
    // P(attempts <= 2) = 1 - 0.01 = 0.99, five binomial sigma.
    const double freq = static_cast<double>(within_two) / trials;
    const double se = std::sqrt(0.99 * 0.01 / trials);
    CHECK(std::fabs(freq - 0.99) <= 5.0 * se);
  }
}

TEST_CASE("epoch delay hand arithmetic") {
  // compute 0.5 s + 2 x 1 s upload + 1 s download = 3.5 s.
  DelayProfile profile = uniform_profile(1, 1'536'000.0, 1e6, 0.5, 1e6, 1e6);
  profile.n_mac_per_sample = 1536.0;
  // batch 500 at 1,536,000 MAC/s = 0.5 s.
  StreamFactory streams(302);
  for (std::uint64_t t = 0; t < 200; ++t) {
    RngStream stream = streams.stream(Stream::Delay, 0, t);
    const EpochDelay delay = epoch_delay(stream, profile, 0, 500.0);
    CHECK(delay.compute_time == doctest::Approx(0.5).epsilon(1e-12));
    if (delay.attempts == 2) {
      CHECK(delay.total_time == doctest::Approx(3.5).epsilon(1e-12));
    }
    CHECK(delay.total_time ==
          doctest::Approx(0.5 + static_cast<double>(delay.attempts) + 1.0).epsilon(1e-12));
    CHECK(std::isfinite(delay.total_time));
    CHECK(delay.total_time >= 0.0);
  }
}

TEST_CASE("arrival probability closed form") {
  DelayProfile profile = uniform_profile(1, 1'536'000.0, 1e6, 0.1, 1e6, 1e6);
  // t_c(500) = 0.5, t_d = 1, one attempt costs 1 s.
  CHECK(arrival_probability(profile, 0, 500.0, 1.4) == 0.0);   // no attempt fits
  CHECK(arrival_probability(profile, 0, 500.0, 2.5) ==
        doctest::Approx(0.9).epsilon(1e-12));                  // exactly one attempt
  CHECK(arrival_probability(profile, 0, 500.0, 3.5) ==
        doctest::Approx(0.99).epsilon(1e-12));                 // two attempts fit
  // Boundary: the k-th attempt finishing exactly at T counts as arrived.
  CHECK(arrival_probability(profile, 0, 500.0, 0.5 + 1.0 + 1.0) ==
        doctest::Approx(0.9).epsilon(1e-12));

  // Monotone in T, antitone in batch size.
  double prev = -1.0;
  for (double deadline = 0.5; deadline < 8.0; deadline += 0.25) {
    const double p = arrival_probability(profile, 0, 500.0, deadline);
    CHECK(p >= prev);
    prev = p;
  }
  prev = 2.0;
  for (double batch = 0.0; batch <= 2000.0; batch += 100.0) {
    const double p = arrival_probability(profile, 0, batch, 3.0);
    CHECK(p <= prev);
    prev = p;
  }
}

TEST_CASE("empirical arrival frequency matches the closed form") {
  StreamFactory streams(303);
  RngStream sampler = streams.stream(Stream::NetworkProfile, 0, 0);
  DelayProfile profile = sample_profile(sampler, 6, 1536.0, 128000.0, 128000.0);
  const std::size_t trials = 100000;
  const double batch = 16.0;
  for (std::size_t i = 0; i < profile.n_clients(); ++i) {
    for (double deadline : {0.35, 0.6, 1.1}) {
      const double p = arrival_probability(profile, i, batch, deadline);
      std::size_t arrived = 0;
      for (std::size_t t = 1; t <= trials; ++t) {
        RngStream stream = streams.stream(Stream::Delay, i, t);
        if (epoch_delay(stream, profile, i, batch).total_time <= deadline) ++arrived;
      }
      const double freq = static_cast<double>(arrived) / trials;
      const double se = std::sqrt(p * (1.0 - p) / trials);
      CHECK(std::fabs(freq - p) <= 5.0 * se);
    }
  }
}

TEST_CASE("sampled profile follows the edge recipe") {
  StreamFactory streams(304);
  RngStream stream = streams.stream(Stream::NetworkProfile, 0, 0);
  const DelayProfile profile = sample_profile(stream, 20, 1536.0, 1e5, 1e5);
  CHECK(profile.n_clients() == 20);
  CHECK(profile.downlink_rate == 1e6);
  CHECK(profile.server_mac_rate == 15'360'000.0);
  for (const auto& link : profile.clients) {
    CHECK(link.uplink_rate >= 0.3e6);
    CHECK(link.uplink_rate <= 1.0e6);
    CHECK(link.mac_rate >= 153'600.0);
    CHECK(link.mac_rate <= 1'536'000.0);
    CHECK(link.erasure_prob == 0.1);
  }
}

TEST_CASE("profile validation rejects bad parameters") {
  DelayProfile profile = uniform_profile(2, 1e6, 1e6, 0.1, 1e5, 1e5);
  CHECK_NOTHROW(profile.validate());
  profile.clients[1].erasure_prob = 1.0;
  CHECK_THROWS_AS(profile.validate(), ConfigError);
  profile.clients[1].erasure_prob = 0.1;
  profile.payload_bits = 0.0;
  CHECK_THROWS_AS(profile.validate(), ConfigError);
}
