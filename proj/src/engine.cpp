#include "scfl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scfl/analysis.hpp"
#include "scfl/random_matrix.hpp"

namespace scfl {

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Scfl: return "scfl";
    case StrategyKind::FlPma: return "fl-pma";
    case StrategyKind::CflFb: return "cfl-fb";
    case StrategyKind::CodedFedl: return "codedfedl";
    case StrategyKind::DpCfl: return "dp-cfl";
  }
  throw ConfigError("unknown strategy kind");
}

Matrix sampled_gradient(const Matrix& x, const Matrix& y, const Matrix& w,
                        std::span<const std::uint8_t> mask, double scale) {
  Matrix grad(w.rows(), w.cols());
  Matrix predicted = matmul(x, w);
  for (std::size_t row = 0; row < x.rows(); ++row) {
    if (!mask[row]) continue;
    const auto x_row = x.row(row);
    const auto y_row = y.row(row);
    auto r_row = predicted.row(row);
    for (std::size_t j = 0; j < r_row.size(); ++j) r_row[j] -= y_row[j];
    for (std::size_t k = 0; k < x_row.size(); ++k) {
      const double xk = x_row[k];
      if (xk == 0.0) continue;
      auto g_row = grad.row(k);
      for (std::size_t j = 0; j < r_row.size(); ++j) g_row[j] += xk * r_row[j];
    }
  }
  grad *= scale;
  return grad;
}

Matrix server_gradient(const CodedDataset& coded, const Matrix& w, RngStream& stream,
                       std::size_t b_s) {
  const std::size_t c = coded.x_tilde.rows();
  if (b_s < 1 || b_s > c) throw ConfigError("server batch must satisfy 1 <= b_s <= c");
  const auto mask = bernoulli_mask(stream, c, static_cast<double>(b_s) / c);
  return sampled_gradient(coded.x_tilde, coded.y_tilde, w, mask,
                          1.0 / static_cast<double>(b_s));
}

Matrix client_gradient(const FederatedDataset& dataset, std::size_t client,
                       const Matrix& w, RngStream& stream, std::size_t b_i) {
  const std::size_t l_i = dataset.client_size(client);
  if (b_i < 1 || b_i > l_i) throw ConfigError("client batch must satisfy 1 <= b_i <= l_i");
  const auto mask =
      bernoulli_mask(stream, l_i, static_cast<double>(b_i) / static_cast<double>(l_i));
  return sampled_gradient(dataset.client_features(client), dataset.client_labels(client), w,
                          mask, static_cast<double>(l_i) / static_cast<double>(b_i));
}

Matrix coded_full_gradient(const CodedDataset& coded, const Matrix& w) {
  const std::size_t c = coded.x_tilde.rows();
  std::vector<std::uint8_t> all(c, 1);
  return sampled_gradient(coded.x_tilde, coded.y_tilde, w, all,
                          1.0 / static_cast<double>(c));
}

Matrix aggregate_scfl(const std::vector<Matrix>& client_grads,
                      const std::vector<std::uint8_t>& arrived, const Matrix& server_grad,
                      const Matrix& w, const std::vector<double>& arrival_probs,
                      double make_up_coeff) {
  Matrix acc(w.rows(), w.cols());
  for (std::size_t i = 0; i < client_grads.size(); ++i) {
    if (!arrived[i]) continue;
    if (!(arrival_probs[i] > 0.0)) {
      throw ConfigError("aggregate: zero arrival probability with weighting enabled");
    }
    acc.add_scaled(client_grads[i], 1.0 / arrival_probs[i]);
  }
  acc += server_grad;
  if (make_up_coeff != 0.0) acc.add_scaled(w, -make_up_coeff);
  acc *= 0.5;
  return acc;
}

std::size_t flpma_keep_count(std::size_t n, double psi) {
  if (psi < 0.0 || psi >= 1.0) throw ConfigError("fl-pma: psi must lie in [0, 1)");
  const auto keep = static_cast<std::size_t>(
      std::ceil((1.0 - psi) * static_cast<double>(n) - 1e-12));
  return std::max<std::size_t>(keep, 1);
}

Matrix aggregate_flpma(const std::vector<Matrix>& client_grads,
                       const std::vector<double>& total_times, double psi) {
  const std::size_t n = client_grads.size();
  const std::size_t keep = flpma_keep_count(n, psi);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (total_times[a] != total_times[b]) return total_times[a] < total_times[b];
    return a < b;
  });
  Matrix acc(client_grads[0].rows(), client_grads[0].cols());
  for (std::size_t k = 0; k < keep; ++k) acc += client_grads[order[k]];
  return acc;
}

double learning_rate(LrSchedule schedule, std::size_t epoch, const BoundEstimates& bounds,
                     double rho, double eta_constant) {
  if (schedule == LrSchedule::Constant) {
    if (eta_constant <= 0.0) throw ConfigError("learning rate: eta must be positive");
    return eta_constant;
  }
  if (epoch < 1) throw ConfigError("learning rate: epoch index starts at 1");
  if (bounds.zeta <= 0.0) throw ConfigError("learning rate: zeta must be positive");
  if (bounds.phi <= 0.0) throw ConfigError("learning rate: phi must be positive");
  if (rho < 0.0) throw ConfigError("learning rate: rho must be nonnegative");
  const double inv_gamma =
      std::sqrt(rho * static_cast<double>(epoch) / (4.0 * bounds.phi * bounds.phi));
  return 1.0 / (bounds.zeta + inv_gamma);
}

double rho_bound(const BoundEstimates& bounds, const RhoParams& params) {
  const double c = static_cast<double>(params.c);
  const double bs = static_cast<double>(params.b_s);
  const double m = static_cast<double>(params.m);
  const double d = static_cast<double>(params.d);
  const double n = static_cast<double>(params.n);
  const double sigma = params.sigma;
  const double phi_sq = bounds.phi * bounds.phi;

  double rho = (c - bs) / (4.0 * c * bs) * bounds.zeta * bounds.kappa;
  rho += (m + m * m) / c * bounds.zeta * bounds.kappa;
  rho += (d + d * d) * n * sigma * sigma * phi_sq / c;
  rho += d * m * n * sigma / (c * c) * (bounds.zeta * phi_sq + bounds.kappa);
  for (std::size_t i = 0; i < params.p.size(); ++i) {
    const double zk = bounds.zeta_i[i] * bounds.zeta_i[i] * bounds.kappa_i[i] *
                      bounds.kappa_i[i];
    if (!(params.p[i] > 0.0)) throw ConfigError("rho: arrival probability must be positive");
    rho += 0.5 * (1.0 - params.p[i]) / params.p[i] * zk;
    const double l_i = static_cast<double>(params.l[i]);
    const double b_i = static_cast<double>(params.b[i]);
    rho += 0.5 * l_i * (l_i - b_i) / b_i * zk;
  }
  return rho;
}

ResolvedBatches resolve_batches(const FederatedDataset& dataset, const CodedDataset* coded,
                                const StrategyConfig& strategy) {
  ResolvedBatches out;
  const std::size_t n = dataset.n_clients();
  const std::size_t c = coded != nullptr ? coded->x_tilde.rows() : 0;
  const bool full_batch = strategy.kind == StrategyKind::CflFb;

  out.server = strategy.server_batch;
  if (full_batch || out.server == 0) out.server = c;

  out.client.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t b = strategy.client_batch.empty()
                        ? 0
                        : strategy.client_batch[std::min(i, strategy.client_batch.size() - 1)];
    if (full_batch || b == 0) b = dataset.client_size(i);
    if (b < 1 || b > dataset.client_size(i)) {
      throw ConfigError("strategy: client batch outside [1, l_i] for client " +
                        std::to_string(i));
    }
    out.client[i] = b;
  }
  return out;
}

namespace {

bool uses_deadline(StrategyKind kind) {
  return kind == StrategyKind::Scfl || kind == StrategyKind::CflFb ||
         kind == StrategyKind::CodedFedl;
}

bool uses_coded(StrategyKind kind) { return kind != StrategyKind::FlPma; }

bool uses_weighting(StrategyKind kind) {
  return kind == StrategyKind::Scfl || kind == StrategyKind::CflFb;
}

}  // namespace

std::vector<double> strategy_arrival_probs(const FederatedDataset& dataset,
                                           const DelayProfile& profile,
                                           const StrategyConfig& strategy) {
  ResolvedBatches batches = resolve_batches(dataset, nullptr, strategy);
  std::vector<double> probs(dataset.n_clients(), 1.0);
  if (!uses_deadline(strategy.kind)) return probs;
  for (std::size_t i = 0; i < dataset.n_clients(); ++i) {
    probs[i] = arrival_probability(profile, i, static_cast<double>(batches.client[i]),
                                   strategy.deadline);
  }
  return probs;
}

RunRecord train(const FederatedDataset& dataset, const CodedDataset* coded,
                const DelayProfile& profile, const StreamFactory& streams,
                const TrainOptions& options) {
  const StrategyConfig& strategy = options.strategy;
  const std::size_t n = dataset.n_clients();
  const std::size_t d = dataset.n_features();
  const std::size_t o = dataset.n_outputs();

  profile.validate();
  if (profile.n_clients() != n) {
    throw ConfigError("train: delay profile covers a different client count");
  }
  if (uses_coded(strategy.kind) && coded == nullptr) {
    throw ConfigError("train: strategy requires a coded dataset");
  }
  if (strategy.kind == StrategyKind::CflFb && coded->config.sigma != 0.0) {
    throw ConfigError("train: cfl-fb requires sigma = 0");
  }

  const ResolvedBatches batches = resolve_batches(dataset, coded, strategy);
  const std::size_t c = coded != nullptr ? coded->x_tilde.rows() : 0;
  if (uses_coded(strategy.kind) && (batches.server < 1 || batches.server > c)) {
    throw ConfigError("train: server batch outside [1, c]");
  }

  std::vector<double> probs(n, 1.0);
  if (uses_deadline(strategy.kind)) {
    if (strategy.deadline <= 0.0) throw ConfigError("train: deadline T must be positive");
    if (server_compute_time(profile, static_cast<double>(batches.server)) >
        strategy.deadline) {
      throw ConfigError("train: server compute time exceeds the deadline T");
    }
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = arrival_probability(profile, i, static_cast<double>(batches.client[i]),
                                     strategy.deadline);
      if (uses_weighting(strategy.kind) && !(probs[i] > 0.0)) {
        throw ConfigError("train: client " + std::to_string(i) +
                          " has zero arrival probability under weighting");
      }
    }
  }

  const bool project =
      strategy.project_phi >= 0 ? strategy.project_phi != 0
                                : strategy.schedule == LrSchedule::Theorem;
  if (project && options.bounds.phi <= 0.0) {
    throw ConfigError("train: projection requires a positive phi bound");
  }

  const double make_up = strategy.kind == StrategyKind::Scfl && coded != nullptr
                             ? coded->effective_sigma_sq
                             : 0.0;

  RunRecord record;
  Matrix w(d, o);
  Matrix w_sum(d, o);
  record.epochs.reserve(options.epochs);

  double clock = 0.0;
  double initial_loss = 0.0;
  std::size_t epochs_run = 0;

  std::vector<Matrix> client_grads(n);
  std::vector<std::uint8_t> arrived(n, 0);
  std::vector<double> totals(n, 0.0);

  for (std::size_t r = 1; r <= options.epochs; ++r) {
    // Residual feeds the loss, the per-client kappa check, and divergence.
    Matrix residual = matmul(dataset.features(), w);
    residual -= dataset.labels();
    const double loss = 0.5 * frobenius_norm_sq(residual);
    if (r == 1) {
      initial_loss = loss;
    } else if (loss > 1e6 * initial_loss) {
      record.diverged = true;
      record.diverged_epoch = r;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double res_sq = 0.0;
      for (std::size_t idx : dataset.partitions()[i]) {
        for (double v : residual.row(idx)) res_sq += v * v;
      }
      if (res_sq > options.bounds.kappa_i[i] * options.bounds.kappa_i[i]) {
        ++record.kappa_violations;
      }
    }

    w_sum += w;
    ++epochs_run;

    Matrix gradient;
    std::size_t n_arrived = 0;

    switch (strategy.kind) {
      case StrategyKind::Scfl:
      case StrategyKind::CflFb:
      case StrategyKind::CodedFedl: {
        for (std::size_t i = 0; i < n; ++i) {
          RngStream delay_stream = streams.stream(Stream::Delay, i, r);
          const EpochDelay delay = epoch_delay(delay_stream, profile, i,
                                               static_cast<double>(batches.client[i]));
          arrived[i] = delay.total_time <= strategy.deadline ? 1 : 0;
          if (arrived[i]) {
            RngStream sampling = streams.stream(Stream::ClientSampling, i, r);
            client_grads[i] = client_gradient(dataset, i, w, sampling, batches.client[i]);
            ++n_arrived;
          }
        }
        RngStream server_stream = streams.stream(Stream::ServerSampling, 0, r);
        const Matrix g_s = server_gradient(*coded, w, server_stream, batches.server);
        const bool weighting = uses_weighting(strategy.kind);
        std::vector<double> unit;
        const std::vector<double>* use_probs = &probs;
        if (!weighting) {
          unit.assign(n, 1.0);
          use_probs = &unit;
        }
        gradient = aggregate_scfl(client_grads, arrived, g_s, w, *use_probs, make_up);
        clock += strategy.deadline;
        break;
      }
      case StrategyKind::FlPma: {
        for (std::size_t i = 0; i < n; ++i) {
          RngStream delay_stream = streams.stream(Stream::Delay, i, r);
          totals[i] = epoch_delay(delay_stream, profile, i,
                                  static_cast<double>(batches.client[i]))
                          .total_time;
          RngStream sampling = streams.stream(Stream::ClientSampling, i, r);
          client_grads[i] = client_gradient(dataset, i, w, sampling, batches.client[i]);
        }
        gradient = aggregate_flpma(client_grads, totals, strategy.psi);
        const std::size_t keep = flpma_keep_count(n, strategy.psi);
        std::vector<double> sorted = totals;
        std::nth_element(sorted.begin(), sorted.begin() + (keep - 1), sorted.end());
        clock += sorted[keep - 1];
        n_arrived = keep;
        break;
      }
      case StrategyKind::DpCfl: {
        gradient = coded_full_gradient(*coded, w);
        clock += server_compute_time(profile, static_cast<double>(c));
        n_arrived = 0;
        break;
      }
    }

    const double grad_norm = frobenius_norm(gradient);
    const double eta =
        learning_rate(strategy.schedule, r, options.bounds, options.rho, strategy.eta);
    w.add_scaled(gradient, -eta);
    if (project) {
      const double norm = frobenius_norm(w);
      if (norm > options.bounds.phi) w *= options.bounds.phi / norm;
    }

    Matrix w_avg = w_sum;
    w_avg *= 1.0 / static_cast<double>(epochs_run);
    const double gap = global_loss(dataset, w_avg) - options.f_star;

    record.epochs.push_back({r, clock, n_arrived, loss, gap, grad_norm});
  }

  record.w_final = w;
  if (epochs_run > 0) {
    record.w_avg = w_sum;
    record.w_avg *= 1.0 / static_cast<double>(epochs_run);
  } else {
    record.w_avg = w;
  }
  record.final_loss = global_loss(dataset, record.w_avg);
  record.final_gap = record.final_loss - options.f_star;
  record.total_time_s = clock;
  return record;
}

}  // namespace scfl
