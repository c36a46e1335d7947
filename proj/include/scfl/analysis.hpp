#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scfl/coding.hpp"
#include "scfl/data.hpp"
#include "scfl/matrix.hpp"
#include "scfl/network.hpp"
#include "scfl/rng.hpp"

namespace scfl {

// Outcome of one Monte Carlo check. The pass flag is exactly the
// five-standard-error rule on the stored fields; a zero standard error
// demands exact agreement.
struct VerificationReport {
  std::string name;
  std::size_t trials = 0;
  double empirical = 0.0;
  double theoretical = 0.0;
  double std_error = 0.0;
  bool pass = false;
};

VerificationReport make_report(std::string name, std::size_t trials, double empirical,
                               double theoretical, double std_error);

// f(W) = 1/2 |XW - Y|_F^2.
double global_loss(const Matrix& x, const Matrix& y, const Matrix& w);
double global_loss(const FederatedDataset& dataset, const Matrix& w);

struct LeastSquaresSolution {
  Matrix w_star;
  double f_star = 0.0;
  double ridge_used = 0.0;
  bool ridge_fallback = false;  // set when the unregularized solve failed
};

// Direct normal-equations solve (Cholesky); a singular system with ridge 0
// retries with ridge 1e-8 tr(X^T X)/d and flags the record.
LeastSquaresSolution least_squares_optimum(const Matrix& x, const Matrix& y,
                                           double ridge = 0.0);
LeastSquaresSolution least_squares_optimum(const FederatedDataset& dataset,
                                           double ridge = 0.0);

double optimality_gap(const FederatedDataset& dataset, const Matrix& w_avg, double f_star);

struct Lemma1Params {
  std::size_t m = 2;    // columns of the composite projection G
  std::size_t d = 3;    // columns of the composite noise
  std::size_t n = 3;    // clients contributing noise blocks
  std::size_t c = 100;  // coded rows
  std::size_t b_s = 50;
  std::size_t l = 10;   // local rows for the client sampling bullet
  std::size_t b = 5;
  NoiseConvention convention = NoiseConvention::CompositeUnit;
};

// Moment checks for the projection, noise, and both sampling matrices:
// worst-entry mean against the identity plus the squared-deviation moment
// of each, eight reports in total.
std::vector<VerificationReport> verify_lemma1(const StreamFactory& streams,
                                              const Lemma1Params& params,
                                              std::size_t trials);

// Empirical arrival frequency against the closed-form arrival probability
// for every client at every deadline.
std::vector<VerificationReport> verify_network(const StreamFactory& streams,
                                               const DelayProfile& profile,
                                               std::span<const std::size_t> batch_sizes,
                                               std::span<const double> deadlines,
                                               std::size_t trials);

}  // namespace scfl
