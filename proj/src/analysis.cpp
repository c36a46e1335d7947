#include "scfl/analysis.hpp"

#include <cmath>

#include "scfl/random_matrix.hpp"

namespace scfl {

VerificationReport make_report(std::string name, std::size_t trials, double empirical,
                               double theoretical, double std_error) {
  VerificationReport report;
  report.name = std::move(name);
  report.trials = trials;
  report.empirical = empirical;
  report.theoretical = theoretical;
  report.std_error = std_error;
  report.pass = std::fabs(empirical - theoretical) <= 5.0 * std_error;
  return report;
}

double global_loss(const Matrix& x, const Matrix& y, const Matrix& w) {
  Matrix residual = matmul(x, w);
  residual -= y;
  return 0.5 * frobenius_norm_sq(residual);
}

double global_loss(const FederatedDataset& dataset, const Matrix& w) {
  return global_loss(dataset.features(), dataset.labels(), w);
}

namespace {

// Lower Cholesky factor of a symmetric positive definite matrix; returns
// false when a pivot fails.
bool cholesky(const Matrix& a, Matrix& lower) {
  const std::size_t n = a.rows();
  lower = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= lower(i, k) * lower(j, k);
      if (i == j) {
        if (!(sum > 0.0) || !std::isfinite(sum)) return false;
        lower(i, i) = std::sqrt(sum);
      } else {
        lower(i, j) = sum / lower(j, j);
      }
    }
  }
  return true;
}

// Solves L L^T W = B in place of B's shape.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  const std::size_t n = lower.rows();
  Matrix w = b;
  // Forward substitution L Z = B.
  for (std::size_t col = 0; col < w.cols(); ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = w(i, col);
      for (std::size_t k = 0; k < i; ++k) sum -= lower(i, k) * w(k, col);
      w(i, col) = sum / lower(i, i);
    }
    // Back substitution L^T W = Z.
    for (std::size_t ii = n; ii > 0; --ii) {
      const std::size_t i = ii - 1;
      double sum = w(i, col);
      for (std::size_t k = i + 1; k < n; ++k) sum -= lower(k, i) * w(k, col);
      w(i, col) = sum / lower(i, i);
    }
  }
  w.check_finite("cholesky_solve");
  return w;
}

}  // namespace

LeastSquaresSolution least_squares_optimum(const Matrix& x, const Matrix& y, double ridge) {
  const Matrix xt = transpose(x);
  Matrix gram = matmul(xt, x);
  const Matrix rhs = matmul(xt, y);
  const std::size_t d = gram.rows();

  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += gram(i, i);

  LeastSquaresSolution out;
  out.ridge_used = ridge;
  if (ridge > 0.0) {
    for (std::size_t i = 0; i < d; ++i) gram(i, i) += ridge;
  }
  Matrix lower;
  if (!cholesky(gram, lower)) {
    if (ridge > 0.0) throw NumericError("least_squares: ridge-regularized solve failed");
    const double fallback = 1e-8 * trace / static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) gram(i, i) += fallback;
    if (!cholesky(gram, lower)) {
      throw NumericError("least_squares: normal equations are numerically singular");
    }
    out.ridge_used = fallback;
    out.ridge_fallback = true;
  }
  out.w_star = cholesky_solve(lower, rhs);
  out.f_star = global_loss(x, y, out.w_star);
  return out;
}

LeastSquaresSolution least_squares_optimum(const FederatedDataset& dataset, double ridge) {
  return least_squares_optimum(dataset.features(), dataset.labels(), ridge);
}

double optimality_gap(const FederatedDataset& dataset, const Matrix& w_avg, double f_star) {
  return global_loss(dataset, w_avg) - f_star;
}

namespace {

// Accumulates per-entry means of a square statistic matrix and the scalar
// squared-deviation moment, then reports the entry with the largest z-score
// plus the moment itself.
class MomentTracker {
 public:
  MomentTracker(std::string label, std::size_t dim, const Matrix& target)
      : label_(std::move(label)),
        target_(target),
        sum_(dim, dim),
        sum_sq_(dim, dim) {}

  void add(const Matrix& statistic, double deviation_sq) {
    sum_ += statistic;
    for (std::size_t i = 0; i < statistic.rows(); ++i)
      for (std::size_t j = 0; j < statistic.cols(); ++j)
        sum_sq_(i, j) += statistic(i, j) * statistic(i, j);
    dev_sum_ += deviation_sq;
    dev_sum_sq_ += deviation_sq * deviation_sq;
    ++trials_;
  }

  void emit(double moment_target, std::vector<VerificationReport>& reports) const {
    const double t = static_cast<double>(trials_);
    double worst_z = -1.0;
    VerificationReport worst;
    for (std::size_t i = 0; i < sum_.rows(); ++i) {
      for (std::size_t j = 0; j < sum_.cols(); ++j) {
        const double mean = sum_(i, j) / t;
        const double var = std::max(sum_sq_(i, j) / t - mean * mean, 0.0);
        const double se = std::sqrt(var / t);
        const double diff = std::fabs(mean - target_(i, j));
        const double z = se > 0.0 ? diff / se : (diff > 0.0 ? 1e300 : 0.0);
        if (z > worst_z) {
          worst_z = z;
          worst = make_report(label_ + ".mean[" + std::to_string(i) + "," +
                                  std::to_string(j) + "]",
                              trials_, mean, target_(i, j), se);
        }
      }
    }
    reports.push_back(worst);

    const double dev_mean = dev_sum_ / t;
    const double dev_var = std::max(dev_sum_sq_ / t - dev_mean * dev_mean, 0.0);
    reports.push_back(make_report(label_ + ".deviation_moment", trials_, dev_mean,
                                  moment_target, std::sqrt(dev_var / t)));
  }

 private:
  std::string label_;
  Matrix target_;
  Matrix sum_;
  Matrix sum_sq_;
  double dev_sum_ = 0.0;
  double dev_sum_sq_ = 0.0;
  std::size_t trials_ = 0;
};

}  // namespace

std::vector<VerificationReport> verify_lemma1(const StreamFactory& streams,
                                              const Lemma1Params& params,
                                              std::size_t trials) {
  if (trials < 1000) throw ConfigError("verify_lemma1: need at least 1000 trials");
  const double c = static_cast<double>(params.c);
  const double m = static_cast<double>(params.m);
  const double d = static_cast<double>(params.d);
  const double l = static_cast<double>(params.l);
  const double bs = static_cast<double>(params.b_s);
  const double b = static_cast<double>(params.b);

  CodingConfig noise_config{params.c, 1.0, params.convention};
  const double nu = per_client_noise_std(noise_config, params.n);
  const double composite_var = composite_noise_variance(noise_config, params.n);

  MomentTracker proj("lemma1.projection", params.m, Matrix::identity(params.m));
  MomentTracker noise("lemma1.noise", params.d, Matrix::identity(params.d));
  MomentTracker server("lemma1.server_sampling", 1, Matrix(1, 1, 1.0));
  MomentTracker client("lemma1.client_sampling", 1, Matrix(1, 1, 1.0));

  for (std::size_t t = 1; t <= trials; ++t) {
    RngStream g_stream = streams.stream(Stream::CodingProjection, 0, t);
    const Matrix g = gaussian_matrix(g_stream, params.c, params.m, 1.0);
    Matrix gram = matmul(transpose(g), g);
    gram *= 1.0 / c;
    double dev = 0.0;
    for (std::size_t i = 0; i < params.m; ++i) {
      for (std::size_t j = 0; j < params.m; ++j) {
        const double delta = gram(i, j) - (i == j ? 1.0 : 0.0);
        dev += delta * delta;
      }
    }
    proj.add(gram, dev);

    // Composite noise from n per-client blocks, normalized by the variance
    // the active convention realizes.
    RngStream n_stream = streams.stream(Stream::CodingNoise, 0, t);
    Matrix composite = gaussian_matrix(n_stream, params.c, params.d, nu);
    for (std::size_t i = 1; i < params.n; ++i) {
      composite += gaussian_matrix(n_stream, params.c, params.d, nu);
    }
    Matrix ngram = matmul(transpose(composite), composite);
    ngram *= 1.0 / (c * composite_var);
    dev = 0.0;
    for (std::size_t i = 0; i < params.d; ++i) {
      for (std::size_t j = 0; j < params.d; ++j) {
        const double delta = ngram(i, j) - (i == j ? 1.0 : 0.0);
        dev += delta * delta;
      }
    }
    noise.add(ngram, dev);

    // Diagonal sampling matrices: off-diagonal entries vanish identically,
    // so it suffices to track one representative diagonal entry and the
    // full deviation moment.
    RngStream s_stream = streams.stream(Stream::ServerSampling, 0, t);
    const auto server_mask = bernoulli_mask(s_stream, params.c, bs / c);
    double server_dev = 0.0;
    double first_diag = server_mask[0] ? c / bs : 0.0;
    for (std::size_t j = 0; j < params.c; ++j) {
      const double delta = (server_mask[j] ? c / bs : 0.0) - 1.0;
      server_dev += delta * delta;
    }
    server.add(Matrix(1, 1, first_diag), server_dev);

    RngStream cs_stream = streams.stream(Stream::ClientSampling, 0, t);
    const auto client_mask = bernoulli_mask(cs_stream, params.l, b / l);
    double client_dev = 0.0;
    first_diag = client_mask[0] ? l / b : 0.0;
    for (std::size_t j = 0; j < params.l; ++j) {
      const double delta = (client_mask[j] ? l / b : 0.0) - 1.0;
      client_dev += delta * delta;
    }
    client.add(Matrix(1, 1, first_diag), client_dev);
  }

  std::vector<VerificationReport> reports;
  proj.emit((m + m * m) / c, reports);
  noise.emit((d + d * d) / c, reports);
  server.emit(c * (c - bs) / bs, reports);
  client.emit(l * (l - b) / b, reports);
  return reports;
}

std::vector<VerificationReport> verify_network(const StreamFactory& streams,
                                               const DelayProfile& profile,
                                               std::span<const std::size_t> batch_sizes,
                                               std::span<const double> deadlines,
                                               std::size_t trials) {
  profile.validate();
  if (batch_sizes.size() != profile.n_clients()) {
    throw ConfigError("verify_network: one batch size per client required");
  }
  std::vector<VerificationReport> reports;
  for (std::size_t i = 0; i < profile.n_clients(); ++i) {
    const double batch = static_cast<double>(batch_sizes[i]);
    for (std::size_t ti = 0; ti < deadlines.size(); ++ti) {
      const double deadline = deadlines[ti];
      const double p = arrival_probability(profile, i, batch, deadline);
      std::size_t arrived = 0;
      for (std::size_t t = 1; t <= trials; ++t) {
        RngStream stream = streams.stream(Stream::Delay, i, t * deadlines.size() + ti);
        if (epoch_delay(stream, profile, i, batch).total_time <= deadline) ++arrived;
      }
      const double freq = static_cast<double>(arrived) / static_cast<double>(trials);
      const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
      reports.push_back(make_report("network.arrival[client=" + std::to_string(i) +
                                        ",T=" + std::to_string(ti) + "]",
                                    trials, freq, p, se));
    }
  }
  return reports;
}

}  // namespace scfl
