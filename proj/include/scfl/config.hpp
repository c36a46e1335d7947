#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scfl/coding.hpp"
#include "scfl/engine.hpp"

namespace scfl {

struct DataSection {
  std::size_t m = 400;
  std::size_t d = 20;
  std::size_t o = 1;
  std::size_t n = 20;
  bool skew = true;
  double noise_std = 0.05;
  double ground_truth_scale = 1.0;
  std::string feature_file;  // empty: synthetic data
  bool rffm = false;
  std::size_t rffm_dim = 2000;
  double rffm_bandwidth = 1.0;
  double phi_cap = 0.0;  // 0: auto, ten times the oracle optimum norm
};

struct CodingSection {
  std::size_t c = 200;
  double sigma = 0.0;
  double target_epsilon = 0.0;
  bool has_target_epsilon = false;  // exactly one of sigma/target is active
  NoiseConvention convention = NoiseConvention::CompositeUnit;
};

struct NetworkSection {
  bool sampled = true;  // draw per-client links from the edge recipe
  double downlink_rate = 1e6;
  double server_mac_rate = 15'360'000.0;
  double n_mac_per_sample = 1536.0;
  double payload_bits = 0.0;  // 0: auto d*o*64
  double model_bits = 0.0;    // 0: auto d*o*64
  double erasure = 0.1;       // shared erasure for the sampled profile
  std::vector<double> uplink_rates;   // explicit profile, one per client
  std::vector<double> mac_rates;
  std::vector<double> erasure_probs;  // optional; defaults to shared erasure
};

struct StrategySection {
  bool present = false;
  StrategyKind kind = StrategyKind::Scfl;
  double deadline_t = 0.0;
  bool has_deadline = false;
  std::size_t server_batch = 0;  // 0: full coded batch
  std::size_t client_batch = 0;  // 0: full local batch
  double psi = 0.0;
  LrSchedule learning_rate = LrSchedule::Theorem;
  double eta = 0.01;
  int project_phi = -1;  // -1 auto
};

struct RunSection {
  std::size_t epochs = 100;
  std::string out_dir = "out";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DataSection data;
  CodingSection coding;
  NetworkSection network;
  StrategySection strategy;
  RunSection run;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Canonical key = value form; parse(serialize(cfg)) is the identity and the
// serialized text is the hash input for run provenance.
std::string serialize_config(const ExperimentConfig& config);
std::string config_hash_hex(const ExperimentConfig& config);

const char* convention_name(NoiseConvention convention);
const char* schedule_name(LrSchedule schedule);

}  // namespace scfl
