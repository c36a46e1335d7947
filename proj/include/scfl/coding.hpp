#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "scfl/data.hpp"
#include "scfl/matrix.hpp"
#include "scfl/rng.hpp"

namespace scfl {

// Per-client noise scaling behind the composite noise level sigma.
//
// CompositeUnit (default): each client adds N(0, sigma^2/n) noise so the
// composite noise has per-entry variance sigma^2 and the -sigma^2 W make-up
// term cancels the coding bias exactly.
//
// PerClientUnit: each client adds N(0, sigma^2) noise; the composite then
// carries variance n sigma^2 and the make-up term scales accordingly.
enum class NoiseConvention { CompositeUnit, PerClientUnit };

struct CodingConfig {
  std::size_t c = 1;       // coded rows per client
  double sigma = 0.0;      // noise level
  NoiseConvention convention = NoiseConvention::CompositeUnit;
};

double per_client_noise_std(const CodingConfig& config, std::size_t n_clients);

// Variance of each entry of the realized composite noise; this is also the
// make-up coefficient used at aggregation.
double composite_noise_variance(const CodingConfig& config, std::size_t n_clients);

struct CodedClient {
  Matrix x;  // c x d
  Matrix y;  // c x o, no noise on labels
};

// x~ = G x + noise with G ~ N(0,1)^{c x l_i}; projection and noise come from
// disjoint streams so sigma sweeps can hold G fixed.
CodedClient encode_client(RngStream& projection, RngStream& noise, const Matrix& x_i,
                          const Matrix& y_i, const CodingConfig& config,
                          std::size_t n_clients);

struct CodedDataset {
  Matrix x_tilde;  // c x d
  Matrix y_tilde;  // c x o
  CodingConfig config;
  double effective_sigma_sq = 0.0;
};

CodedDataset build_composite(const std::vector<CodedClient>& parts,
                             const CodingConfig& config, std::size_t n_clients);

// One-shot encoding of every client before training starts.
CodedDataset encode_dataset(const StreamFactory& streams, const FederatedDataset& dataset,
                            const CodingConfig& config);

// min over columns of sqrt(column sum of squares - largest squared entry).
double h_value(const Matrix& x_i);

struct PrivacyReport {
  std::vector<double> per_client_epsilon;
  std::vector<double> per_client_h;
  double epsilon = 0.0;  // max over clients
};

// MI-DP budget eps_i = 1/2 log2(1 + c / (h_i^2 + nu^2)) with nu^2 the actual
// per-client noise variance under the active convention.
PrivacyReport privacy_budget(const FederatedDataset& dataset, const CodingConfig& config);

// Smallest sigma >= 0 whose budget does not exceed target_epsilon.
double calibrate_sigma(const FederatedDataset& dataset, std::size_t c,
                       double target_epsilon, NoiseConvention convention);

void export_coded(const std::string& path, const CodedDataset& coded);
CodedDataset import_coded(const std::string& path, const CodingConfig& config,
                          std::size_t n_clients);

}  // namespace scfl
