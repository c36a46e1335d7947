#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scfl/coding.hpp"
#include "scfl/data.hpp"
#include "scfl/matrix.hpp"
#include "scfl/network.hpp"
#include "scfl/rng.hpp"

namespace scfl {

enum class StrategyKind { Scfl, FlPma, CflFb, CodedFedl, DpCfl };
enum class LrSchedule { Theorem, Constant };

std::string strategy_name(StrategyKind kind);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::Scfl;
  double deadline = 0.0;                   // epoch window T, seconds
  std::size_t server_batch = 0;            // 0 resolves to the full coded batch
  std::vector<std::size_t> client_batch;   // per client; empty resolves to full
  double psi = 0.0;                        // FL-PMA dropout fraction
  LrSchedule schedule = LrSchedule::Theorem;
  double eta = 0.01;                       // constant schedule step
  int project_phi = -1;                    // -1 auto: on for theorem, off otherwise
};

// Batch-sampled gradients. The Bernoulli masks realize the diagonal sampling
// matrices; the fixed scale (l_i/b_i resp. c/b_s worth of 1/b) keeps the
// estimates unbiased regardless of the realized batch size.
Matrix sampled_gradient(const Matrix& x, const Matrix& y, const Matrix& w,
                        std::span<const std::uint8_t> mask, double scale);

Matrix server_gradient(const CodedDataset& coded, const Matrix& w, RngStream& stream,
                       std::size_t b_s);
Matrix client_gradient(const FederatedDataset& dataset, std::size_t client,
                       const Matrix& w, RngStream& stream, std::size_t b_i);

// Full-batch gradient on the coded composite, (1/c) X~^T (X~ W - Y~).
Matrix coded_full_gradient(const CodedDataset& coded, const Matrix& w);

// g = 1/2 [ sum_i arrived_i g_i / p_i + g_s - make_up_coeff W ].
Matrix aggregate_scfl(const std::vector<Matrix>& client_grads,
                      const std::vector<std::uint8_t>& arrived, const Matrix& server_grad,
                      const Matrix& w, const std::vector<double>& arrival_probs,
                      double make_up_coeff);

std::size_t flpma_keep_count(std::size_t n, double psi);

// Sum of the gradients of the first ceil((1-psi) n) clients by arrival time,
// ties broken by client index.
Matrix aggregate_flpma(const std::vector<Matrix>& client_grads,
                       const std::vector<double>& total_times, double psi);

// Theorem schedule eta_r = 1 / (zeta + sqrt(rho r / (4 phi^2))).
double learning_rate(LrSchedule schedule, std::size_t epoch, const BoundEstimates& bounds,
                     double rho, double eta_constant);

struct RhoParams {
  std::size_t m = 0;
  std::size_t d = 0;
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t b_s = 0;
  double sigma = 0.0;
  std::vector<std::size_t> l;  // client rows
  std::vector<std::size_t> b;  // client batches
  std::vector<double> p;       // arrival probabilities
};

// Six-term gradient variance bound rho.
double rho_bound(const BoundEstimates& bounds, const RhoParams& params);

struct EpochEntry {
  std::size_t epoch = 0;
  double clock_s = 0.0;
  std::size_t n_arrived = 0;
  double loss = 0.0;
  double gap = 0.0;
  double grad_norm = 0.0;
};

struct RunRecord {
  std::vector<EpochEntry> epochs;
  Matrix w_final;
  Matrix w_avg;
  double final_loss = 0.0;
  double final_gap = 0.0;
  double total_time_s = 0.0;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
  std::size_t kappa_violations = 0;
};

struct TrainOptions {
  StrategyConfig strategy;
  std::size_t epochs = 0;
  double f_star = 0.0;
  BoundEstimates bounds;
  double rho = 0.0;
};

struct ResolvedBatches {
  std::size_t server = 0;
  std::vector<std::size_t> client;
};

ResolvedBatches resolve_batches(const FederatedDataset& dataset, const CodedDataset* coded,
                                const StrategyConfig& strategy);

std::vector<double> strategy_arrival_probs(const FederatedDataset& dataset,
                                           const DelayProfile& profile,
                                           const StrategyConfig& strategy);

// Runs R epochs of the configured strategy; draws one delay, one client
// sampling, and one server sampling stream per (client, epoch) label so
// different strategies on the same seed face identical randomness.
RunRecord train(const FederatedDataset& dataset, const CodedDataset* coded,
                const DelayProfile& profile, const StreamFactory& streams,
                const TrainOptions& options);

}  // namespace scfl
