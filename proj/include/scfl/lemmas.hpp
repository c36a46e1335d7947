#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "scfl/analysis.hpp"
#include "scfl/engine.hpp"

namespace scfl {

// Fixed experiment slice used by the gradient-moment verifiers: one probe
// model, one batch/deadline configuration, full re-randomization of coding,
// sampling, and arrivals per trial.
struct LemmaSetup {
  const FederatedDataset* dataset = nullptr;
  const DelayProfile* profile = nullptr;
  std::size_t c = 0;
  NoiseConvention convention = NoiseConvention::CompositeUnit;
  std::size_t b_s = 0;
  std::vector<std::size_t> b;  // per-client batches
  double deadline = 0.0;
  Matrix probe_w;
};

// Entrywise Monte Carlo mean of the aggregated gradient against the exact
// X^T (XW - Y); one worst-entry report per noise level. The make-up
// coefficient is taken from the active convention unless overridden (the
// override exists to regression-test the convention mismatch).
std::vector<VerificationReport> verify_lemma2(const StreamFactory& streams,
                                              const LemmaSetup& setup,
                                              std::span<const double> sigmas,
                                              std::size_t trials,
                                              const double* make_up_override = nullptr);

struct VarianceEstimate {
  double variance = 0.0;
  double std_error = 0.0;
};

// Empirical E |g - grad f|_F^2 under full re-randomization.
VarianceEstimate measure_aggregate_variance(const StreamFactory& streams,
                                            const LemmaSetup& setup, double sigma,
                                            std::size_t trials);

struct Lemma3Result {
  std::vector<VerificationReport> reports;  // cross-term cancellation check
  double total_variance = 0.0;
  double server_sampling_component = 0.0;   // batch sampling on the composite
  double coding_component = 0.0;            // projection plus noise, after make-up
  double client_component = 0.0;            // arrivals plus local sampling
  double rho = 0.0;
  double ratio = 0.0;  // total variance over rho
};

// Splits the aggregation error into its three independent sources and checks
// that the component variances add up to the total.
Lemma3Result verify_lemma3(const StreamFactory& streams, const LemmaSetup& setup,
                           double sigma, std::size_t trials,
                           const BoundEstimates& bounds);

}  // namespace scfl
