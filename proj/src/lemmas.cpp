#include "scfl/lemmas.hpp"

#include <cmath>

#include "scfl/random_matrix.hpp"

namespace scfl {

namespace {

struct TrialDraws {
  Matrix x_base;      // sum_i G_i X^(i), before noise
  Matrix y_tilde;     // sum_i G_i Y^(i)
  Matrix noise_sum;   // sum of per-client unit noise blocks
  Matrix client_sum;  // weighted arrived client gradients
  std::vector<std::uint8_t> server_mask;
};

// One full re-randomization of coding, sampling, and arrivals. The noise is
// kept as the unit composite so several sigma levels can share the draw.
TrialDraws run_trial(const StreamFactory& streams, const LemmaSetup& setup,
                     const std::vector<double>& probs, std::size_t t) {
  const FederatedDataset& data = *setup.dataset;
  const std::size_t n = data.n_clients();
  const std::size_t d = data.n_features();
  const std::size_t o = data.n_outputs();

  TrialDraws out;
  out.x_base = Matrix(setup.c, d);
  out.y_tilde = Matrix(setup.c, o);
  out.noise_sum = Matrix(setup.c, d);
  out.client_sum = Matrix(d, o);

  for (std::size_t i = 0; i < n; ++i) {
    RngStream proj = streams.stream(Stream::CodingProjection, i, t);
    const Matrix g = gaussian_matrix(proj, setup.c, data.client_size(i), 1.0);
    out.x_base += matmul(g, data.client_features(i));
    out.y_tilde += matmul(g, data.client_labels(i));

    RngStream noise = streams.stream(Stream::CodingNoise, i, t);
    out.noise_sum += gaussian_matrix(noise, setup.c, d, 1.0);

    RngStream delay_stream = streams.stream(Stream::Delay, i, t);
    const EpochDelay delay =
        epoch_delay(delay_stream, *setup.profile, i, static_cast<double>(setup.b[i]));
    if (delay.total_time <= setup.deadline) {
      RngStream sampling = streams.stream(Stream::ClientSampling, i, t);
      const Matrix g_i = client_gradient(data, i, setup.probe_w, sampling, setup.b[i]);
      out.client_sum.add_scaled(g_i, 1.0 / probs[i]);
    }
  }

  RngStream server = streams.stream(Stream::ServerSampling, 0, t);
  out.server_mask = bernoulli_mask(server, setup.c,
                                   static_cast<double>(setup.b_s) /
                                       static_cast<double>(setup.c));
  return out;
}

std::vector<double> setup_probs(const LemmaSetup& setup) {
  const std::size_t n = setup.dataset->n_clients();
  if (setup.b.size() != n) throw ConfigError("lemma setup: one batch per client required");
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = arrival_probability(*setup.profile, i, static_cast<double>(setup.b[i]),
                                   setup.deadline);
    if (!(probs[i] > 0.0)) {
      throw ConfigError("lemma setup: client " + std::to_string(i) +
                        " can never arrive before the deadline");
    }
  }
  return probs;
}

Matrix exact_gradient(const FederatedDataset& data, const Matrix& w) {
  Matrix residual = matmul(data.features(), w);
  residual -= data.labels();
  return matmul(transpose(data.features()), residual);
}

}  // namespace

std::vector<VerificationReport> verify_lemma2(const StreamFactory& streams,
                                              const LemmaSetup& setup,
                                              std::span<const double> sigmas,
                                              std::size_t trials,
                                              const double* make_up_override) {
  const FederatedDataset& data = *setup.dataset;
  const std::size_t n = data.n_clients();
  const std::size_t d = data.n_features();
  const std::size_t o = data.n_outputs();
  const std::vector<double> probs = setup_probs(setup);
  const Matrix grad_true = exact_gradient(data, setup.probe_w);

  std::vector<Matrix> sums(sigmas.size(), Matrix(d, o));
  std::vector<Matrix> sums_sq(sigmas.size(), Matrix(d, o));

  for (std::size_t t = 1; t <= trials; ++t) {
    const TrialDraws draws = run_trial(streams, setup, probs, t);
    for (std::size_t k = 0; k < sigmas.size(); ++k) {
      const CodingConfig config{setup.c, sigmas[k], setup.convention};
      const double nu = per_client_noise_std(config, n);
      Matrix x_tilde = draws.x_base;
      if (nu > 0.0) x_tilde.add_scaled(draws.noise_sum, nu);
      const Matrix g_s = sampled_gradient(x_tilde, draws.y_tilde, setup.probe_w,
                                          draws.server_mask,
                                          1.0 / static_cast<double>(setup.b_s));
      const double make_up = make_up_override != nullptr
                                 ? *make_up_override
                                 : composite_noise_variance(config, n);
      Matrix g = draws.client_sum;
      g += g_s;
      if (make_up != 0.0) g.add_scaled(setup.probe_w, -make_up);
      g *= 0.5;

      sums[k] += g;
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j)
          sums_sq[k](i, j) += g(i, j) * g(i, j);
    }
  }

  std::vector<VerificationReport> reports;
  const double t_count = static_cast<double>(trials);
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    double worst_z = -1.0;
    VerificationReport worst;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < o; ++j) {
        const double mean = sums[k](i, j) / t_count;
        const double var = std::max(sums_sq[k](i, j) / t_count - mean * mean, 0.0);
        const double se = std::sqrt(var / t_count);
        const double diff = std::fabs(mean - grad_true(i, j));
        const double z = se > 0.0 ? diff / se : (diff > 0.0 ? 1e300 : 0.0);
        if (z > worst_z) {
          worst_z = z;
          worst = make_report("lemma2.mean[sigma=" + std::to_string(sigmas[k]) + ",entry=" +
                                  std::to_string(i) + "," + std::to_string(j) + "]",
                              trials, mean, grad_true(i, j), se);
        }
      }
    }
    reports.push_back(worst);
  }
  return reports;
}

VarianceEstimate measure_aggregate_variance(const StreamFactory& streams,
                                            const LemmaSetup& setup, double sigma,
                                            std::size_t trials) {
  const FederatedDataset& data = *setup.dataset;
  const std::size_t n = data.n_clients();
  const std::vector<double> probs = setup_probs(setup);
  const Matrix grad_true = exact_gradient(data, setup.probe_w);
  const CodingConfig config{setup.c, sigma, setup.convention};
  const double nu = per_client_noise_std(config, n);
  const double make_up = composite_noise_variance(config, n);

  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t t = 1; t <= trials; ++t) {
    const TrialDraws draws = run_trial(streams, setup, probs, t);
    Matrix x_tilde = draws.x_base;
    if (nu > 0.0) x_tilde.add_scaled(draws.noise_sum, nu);
    const Matrix g_s = sampled_gradient(x_tilde, draws.y_tilde, setup.probe_w,
                                        draws.server_mask,
                                        1.0 / static_cast<double>(setup.b_s));
    Matrix g = draws.client_sum;
    g += g_s;
    if (make_up != 0.0) g.add_scaled(setup.probe_w, -make_up);
    g *= 0.5;
    g -= grad_true;
    const double err = frobenius_norm_sq(g);
    sum += err;
    sum_sq += err * err;
  }
  const double t_count = static_cast<double>(trials);
  VarianceEstimate out;
  out.variance = sum / t_count;
  out.std_error = std::sqrt(std::max(sum_sq / t_count - out.variance * out.variance, 0.0) /
                            t_count);
  return out;
}

Lemma3Result verify_lemma3(const StreamFactory& streams, const LemmaSetup& setup,
                           double sigma, std::size_t trials,
                           const BoundEstimates& bounds) {
  const FederatedDataset& data = *setup.dataset;
  const std::size_t n = data.n_clients();
  const std::vector<double> probs = setup_probs(setup);
  const Matrix grad_true = exact_gradient(data, setup.probe_w);
  const CodingConfig config{setup.c, sigma, setup.convention};
  const double nu = per_client_noise_std(config, n);
  const double make_up = composite_noise_variance(config, n);

  double sum_total = 0.0, sum_total_sq = 0.0;
  double sum_a = 0.0, sum_b = 0.0, sum_c = 0.0;
  double sum_cross = 0.0, sum_cross_sq = 0.0;

  for (std::size_t t = 1; t <= trials; ++t) {
    const TrialDraws draws = run_trial(streams, setup, probs, t);
    Matrix x_tilde = draws.x_base;
    if (nu > 0.0) x_tilde.add_scaled(draws.noise_sum, nu);

    CodedDataset realized;
    realized.x_tilde = x_tilde;
    realized.y_tilde = draws.y_tilde;
    const Matrix full_coded = coded_full_gradient(realized, setup.probe_w);
    const Matrix g_s = sampled_gradient(x_tilde, draws.y_tilde, setup.probe_w,
                                        draws.server_mask,
                                        1.0 / static_cast<double>(setup.b_s));

    // Independent error sources: server batch sampling, coding plus noise,
    // client arrivals plus local sampling.
    Matrix part_a = g_s;
    part_a -= full_coded;
    part_a *= 0.5;

    Matrix part_b = full_coded;
    if (make_up != 0.0) part_b.add_scaled(setup.probe_w, -make_up);
    part_b -= grad_true;
    part_b *= 0.5;

    Matrix part_c = draws.client_sum;
    part_c -= grad_true;
    part_c *= 0.5;

    const double a_sq = frobenius_norm_sq(part_a);
    const double b_sq = frobenius_norm_sq(part_b);
    const double c_sq = frobenius_norm_sq(part_c);
    Matrix total = part_a;
    total += part_b;
    total += part_c;
    const double total_sq = frobenius_norm_sq(total);

    sum_a += a_sq;
    sum_b += b_sq;
    sum_c += c_sq;
    sum_total += total_sq;
    sum_total_sq += total_sq * total_sq;
    const double cross = total_sq - a_sq - b_sq - c_sq;
    sum_cross += cross;
    sum_cross_sq += cross * cross;
  }

  const double t_count = static_cast<double>(trials);
  Lemma3Result out;
  out.total_variance = sum_total / t_count;
  out.server_sampling_component = sum_a / t_count;
  out.coding_component = sum_b / t_count;
  out.client_component = sum_c / t_count;

  const double cross_mean = sum_cross / t_count;
  const double cross_se = std::sqrt(
      std::max(sum_cross_sq / t_count - cross_mean * cross_mean, 0.0) / t_count);
  out.reports.push_back(make_report("lemma3.component_additivity[sigma=" +
                                        std::to_string(sigma) + "]",
                                    trials, cross_mean, 0.0, cross_se));

  RhoParams rho_params;
  rho_params.m = data.n_samples();
  rho_params.d = data.n_features();
  rho_params.n = n;
  rho_params.c = setup.c;
  rho_params.b_s = setup.b_s;
  rho_params.sigma = sigma;
  rho_params.l.resize(n);
  for (std::size_t i = 0; i < n; ++i) rho_params.l[i] = data.client_size(i);
  rho_params.b = setup.b;
  rho_params.p = probs;
  out.rho = rho_bound(bounds, rho_params);
  out.ratio = out.rho > 0.0 ? out.total_variance / out.rho : 0.0;
  return out;
}

}  // namespace scfl
