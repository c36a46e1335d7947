#include <cmath>

#include "doctest.h"
#include "scfl/analysis.hpp"
#include "scfl/engine.hpp"
#include "scfl/random_matrix.hpp"

using namespace scfl;

namespace {

FederatedDataset make_dataset(std::uint64_t seed, std::size_t m, std::size_t d,
                              std::size_t o, std::size_t n, double noise_std = 0.1) {
  StreamFactory streams(seed);
  RngStream gen = streams.stream(Stream::DataFeatures, 0, 0);
  SyntheticData data = generate_synthetic(gen, m, d, o, noise_std, 1.0);
  RngStream part = streams.stream(Stream::DataPartition, 0, 0);
  return FederatedDataset(std::move(data.features), std::move(data.labels),
                          iid_partition(part, m, n));
}

DelayProfile fast_profile(std::size_t n) {
  DelayProfile profile;
  profile.clients.assign(n, ClientLink{1e9, 1e9, 0.0});
  profile.downlink_rate = 1e9;
  profile.server_mac_rate = 1e12;
  profile.n_mac_per_sample = 1536.0;
  profile.payload_bits = 1e3;
  profile.model_bits = 1e3;
  return profile;
}

Matrix exact_gradient(const FederatedDataset& dataset, const Matrix& w) {
  Matrix residual = matmul(dataset.features(), w);
  residual -= dataset.labels();
  return matmul(transpose(dataset.features()), residual);
}

}  // namespace

TEST_CASE("server gradient: full batch equals the coded full gradient") {
  const FederatedDataset dataset = make_dataset(401, 30, 4, 2, 3);
  StreamFactory streams(402);
  const CodingConfig config{12, 0.0, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  RngStream probe = streams.stream(Stream::Probe, 0, 0);
  const Matrix w = gaussian_matrix(probe, 4, 2, 0.5);

  RngStream sampler = streams.stream(Stream::ServerSampling, 0, 1);
  const Matrix full = server_gradient(coded, w, sampler, 12);
  const Matrix reference = coded_full_gradient(coded, w);
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full.data()[i] == doctest::Approx(reference.data()[i]).epsilon(1e-12));
  }

  // W = 0, Y~ = 0 gives the zero gradient.
  CodedDataset zero_labels = coded;
  zero_labels.y_tilde = Matrix(12, 2);
  RngStream sampler2 = streams.stream(Stream::ServerSampling, 0, 2);
  const Matrix zero = server_gradient(zero_labels, Matrix(4, 2), sampler2, 6);
  CHECK(frobenius_norm_sq(zero) == 0.0);

  RngStream sampler3 = streams.stream(Stream::ServerSampling, 0, 3);
  CHECK_THROWS_AS(server_gradient(coded, w, sampler3, 13), ConfigError);
}

TEST_CASE("server gradient sampling is unbiased for the coded full gradient") {
  const FederatedDataset dataset = make_dataset(403, 40, 5, 1, 4);
  StreamFactory streams(404);
  const CodingConfig config{20, 0.5, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  RngStream probe = streams.stream(Stream::Probe, 0, 0);
  const Matrix w = gaussian_matrix(probe, 5, 1, 0.5);
  const Matrix reference = coded_full_gradient(coded, w);

  const std::size_t trials = 10000;
  Matrix sum(5, 1), sum_sq(5, 1);
  for (std::uint64_t t = 1; t <= trials; ++t) {
    RngStream sampler = streams.stream(Stream::ServerSampling, 0, t);
    const Matrix g = server_gradient(coded, w, sampler, 8);
    sum += g;
    for (std::size_t i = 0; i < g.size(); ++i)
      sum_sq.data()[i] += g.data()[i] * g.data()[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum.data()[i] / trials;
    const double var = sum_sq.data()[i] / trials - mean * mean;
    const double se = std::sqrt(var / trials);
    CHECK(std::fabs(mean - reference.data()[i]) <= 5.0 * se);
  }
}

TEST_CASE("client gradient: full batch is exact, sampling is unbiased") {
  const FederatedDataset dataset = make_dataset(405, 36, 4, 2, 3);
  StreamFactory streams(406);
  RngStream probe = streams.stream(Stream::Probe, 0, 0);
  const Matrix w = gaussian_matrix(probe, 4, 2, 0.5);

  const std::size_t l0 = dataset.client_size(0);
  RngStream full_stream = streams.stream(Stream::ClientSampling, 0, 0);
  const Matrix full = client_gradient(dataset, 0, w, full_stream, l0);
  Matrix residual = matmul(dataset.client_features(0), w);
  residual -= dataset.client_labels(0);
  const Matrix exact = matmul(transpose(dataset.client_features(0)), residual);
  for (std::size_t i = 0; i < full.size(); ++i) {
    CHECK(full.data()[i] == doctest::Approx(exact.data()[i]).epsilon(1e-12));
  }

  const std::size_t trials = 10000;
  Matrix sum(4, 2), sum_sq(4, 2);
  for (std::uint64_t t = 1; t <= trials; ++t) {
    RngStream sampler = streams.stream(Stream::ClientSampling, 0, t);
    const Matrix g = client_gradient(dataset, 0, w, sampler, l0 / 3);
    sum += g;
    for (std::size_t i = 0; i < g.size(); ++i)
      sum_sq.data()[i] += g.data()[i] * g.data()[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum.data()[i] / trials;
    const double var = sum_sq.data()[i] / trials - mean * mean;
    const double se = std::sqrt(var / trials);
    CHECK(std::fabs(mean - exact.data()[i]) <= 5.0 * se);
  }

  // All-zero features give the zero gradient.
  Matrix zx(8, 3);
  Matrix zy(8, 1, 0.25);
  const FederatedDataset zeros(zx, zy, Partition{{0, 1, 2, 3}, {4, 5, 6, 7}});
  RngStream zs = streams.stream(Stream::ClientSampling, 1, 0);
  CHECK(frobenius_norm_sq(client_gradient(zeros, 0, Matrix(3, 1), zs, 2)) == 0.0);
}

TEST_CASE("scfl aggregation formula") {
  const std::size_t d = 3, o = 2;
  StreamFactory streams(407);
  RngStream gen = streams.stream(Stream::Trial, 0, 0);
  const Matrix w = gaussian_matrix(gen, d, o, 1.0);
  const Matrix g0 = gaussian_matrix(gen, d, o, 1.0);
  const Matrix g1 = gaussian_matrix(gen, d, o, 1.0);
  const Matrix gs = gaussian_matrix(gen, d, o, 1.0);

  // All arrived at p = 1, sigma = 0: one half of (sum + server).
  const Matrix all = aggregate_scfl({g0, g1}, {1, 1}, gs, w, {1.0, 1.0}, 0.0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const double expected = 0.5 * (g0.data()[i] + g1.data()[i] + gs.data()[i]);
    CHECK(all.data()[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  // Nobody arrived: server-only epoch with the make-up term.
  const double coeff = 0.36;
  const Matrix none = aggregate_scfl({g0, g1}, {0, 0}, gs, w, {0.5, 0.5}, coeff);
  for (std::size_t i = 0; i < none.size(); ++i) {
    const double expected = 0.5 * (gs.data()[i] - coeff * w.data()[i]);
    CHECK(none.data()[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  // Inverse probability weighting scales an arrived gradient.
  const Matrix weighted = aggregate_scfl({g0, g1}, {1, 0}, gs, w, {0.25, 1.0}, 0.0);
  for (std::size_t i = 0; i < weighted.size(); ++i) {
    const double expected = 0.5 * (4.0 * g0.data()[i] + gs.data()[i]);
    CHECK(weighted.data()[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  CHECK_THROWS_AS(aggregate_scfl({g0}, {1}, gs, w, {0.0}, 0.0), ConfigError);
}

TEST_CASE("fl-pma keeps the earliest arrivals with index tie breaks") {
  StreamFactory streams(408);
  RngStream gen = streams.stream(Stream::Trial, 1, 0);
  std::vector<Matrix> grads;
  for (int i = 0; i < 4; ++i) grads.push_back(gaussian_matrix(gen, 2, 1, 1.0));

  CHECK(flpma_keep_count(4, 0.0) == 4);
  CHECK(flpma_keep_count(4, 0.5) == 2);
  CHECK(flpma_keep_count(4, 0.9) == 1);

  // psi = 0 sums every gradient.
  const Matrix sum_all = aggregate_flpma(grads, {3.0, 1.0, 2.0, 4.0}, 0.0);
  for (std::size_t i = 0; i < sum_all.size(); ++i) {
    const double expected = grads[0].data()[i] + grads[1].data()[i] + grads[2].data()[i] +
                            grads[3].data()[i];
    CHECK(sum_all.data()[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  // psi = 0.5 keeps the two earliest (clients 1 and 2 here).
  const Matrix sum_two = aggregate_flpma(grads, {3.0, 1.0, 2.0, 4.0}, 0.5);
  for (std::size_t i = 0; i < sum_two.size(); ++i) {
    const double expected = grads[1].data()[i] + grads[2].data()[i];
    CHECK(sum_two.data()[i] == doctest::Approx(expected).epsilon(1e-12));
  }

  // Equal times: the lower index wins.
  CHECK(flpma_keep_count(4, 0.8) == 1);
  const Matrix tie = aggregate_flpma(grads, {2.0, 2.0, 2.0, 2.0}, 0.8);
  for (std::size_t i = 0; i < tie.size(); ++i) {
    CHECK(tie.data()[i] == doctest::Approx(grads[0].data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("learning rate schedule") {
  BoundEstimates bounds;
  bounds.zeta = 1.0;
  bounds.phi = 1.0;
  CHECK(learning_rate(LrSchedule::Theorem, 1, bounds, 4.0, 0.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(learning_rate(LrSchedule::Theorem, 5, bounds, 0.0, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  double previous = 1.0;
  for (std::size_t r = 1; r <= 100000; r *= 2) {
    const double eta = learning_rate(LrSchedule::Theorem, r, bounds, 4.0, 0.0);
    CHECK(eta <= previous);
    previous = eta;
  }
  CHECK(previous < 0.005);  // heads to zero

  CHECK(learning_rate(LrSchedule::Constant, 3, bounds, 0.0, 0.125) == 0.125);
  BoundEstimates bad = bounds;
  bad.zeta = 0.0;
  CHECK_THROWS_AS(learning_rate(LrSchedule::Theorem, 1, bad, 1.0, 0.0), ConfigError);
}

TEST_CASE("rho bound term accounting") {
  const FederatedDataset dataset = make_dataset(409, 40, 5, 1, 4);
  const BoundEstimates bounds = compute_bounds(dataset, 3.0);

  RhoParams params;
  params.m = 40;
  params.d = 5;
  params.n = 4;
  params.c = 64;
  params.b_s = 64;
  params.sigma = 0.0;
  params.l.assign(4, 10);
  params.b.assign(4, 10);
  params.p.assign(4, 1.0);

  // Everything deterministic except coding: only the (m + m^2)/c term is left.
  const double only_coding = rho_bound(bounds, params);
  const double expected = (40.0 + 1600.0) / 64.0 * bounds.zeta * bounds.kappa;
  CHECK(only_coding == doctest::Approx(expected).epsilon(1e-12));

  // c to infinity with full batches drives rho to zero (1/c scaling).
  params.c = 1 << 26;
  params.b_s = 1 << 26;
  CHECK(rho_bound(bounds, params) < only_coding / 1e5);

  // Independent second implementation of the six-term formula.
  StreamFactory streams(410);
  RngStream gen = streams.stream(Stream::Trial, 2, 0);
  params.c = 50;
  params.b_s = 20;
  params.sigma = 0.7;
  for (std::size_t i = 0; i < 4; ++i) {
    params.b[i] = 3 + static_cast<std::size_t>(gen.next_u64() % 7);
    params.p[i] = 0.3 + 0.6 * gen.next_uniform();
  }
  const double actual = rho_bound(bounds, params);

  const double c = 50.0, bs = 20.0, m = 40.0, dd = 5.0, nn = 4.0, sg = 0.7;
  const double phi2 = bounds.phi * bounds.phi;
  double expected2 = (c - bs) / (4 * c * bs) * bounds.zeta * bounds.kappa +
                     (m + m * m) / c * bounds.zeta * bounds.kappa +
                     (dd + dd * dd) * nn * sg * sg * phi2 / c +
                     dd * m * nn * sg / (c * c) * (bounds.zeta * phi2 + bounds.kappa);
  for (std::size_t i = 0; i < 4; ++i) {
    const double zk2 = bounds.zeta_i[i] * bounds.zeta_i[i] * bounds.kappa_i[i] *
                       bounds.kappa_i[i];
    const double li = 10.0, bi = static_cast<double>(params.b[i]);
    expected2 += 0.5 * (1.0 - params.p[i]) / params.p[i] * zk2;
    expected2 += 0.5 * li * (li - bi) / bi * zk2;
  }
  CHECK(actual == doctest::Approx(expected2).epsilon(1e-12));
}

TEST_CASE("train: degenerate zero-epoch run") {
  const FederatedDataset dataset = make_dataset(411, 24, 3, 1, 3);
  StreamFactory streams(412);
  const CodingConfig config{12, 0.0, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  const DelayProfile profile = fast_profile(3);

  TrainOptions options;
  options.strategy.kind = StrategyKind::Scfl;
  options.strategy.deadline = 1.0;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 0.01;
  options.epochs = 0;
  options.f_star = 0.0;
  options.bounds = compute_bounds(dataset, 10.0);
  options.rho = 0.0;

  const RunRecord record = train(dataset, &coded, profile, streams, options);
  CHECK(record.epochs.empty());
  CHECK(frobenius_norm_sq(record.w_final) == 0.0);
  CHECK(frobenius_norm_sq(record.w_avg) == 0.0);
  CHECK(record.total_time_s == 0.0);
}

TEST_CASE("train: deterministic single-client descent is monotone") {
  // sigma = 0, p = 1, full batches, and an exactly orthogonal projection
  // stand-in (X~ = sqrt(m) X): plain gradient descent on a convex quadratic;
  // with eta < 2 / zeta the loss never increases.
  StreamFactory data_streams(413);
  RngStream gen = data_streams.stream(Stream::DataFeatures, 0, 0);
  SyntheticData data = generate_synthetic(gen, 50, 4, 1, 0.05, 1.0);
  std::vector<std::size_t> all(50);
  for (std::size_t i = 0; i < 50; ++i) all[i] = i;
  const FederatedDataset dataset(std::move(data.features), std::move(data.labels),
                                 Partition{all});

  StreamFactory streams(414);
  CodedDataset coded;
  coded.x_tilde = dataset.features() * std::sqrt(50.0);
  coded.y_tilde = dataset.labels() * std::sqrt(50.0);
  coded.config = CodingConfig{50, 0.0, NoiseConvention::CompositeUnit};
  const DelayProfile profile = fast_profile(1);
  const BoundEstimates bounds = compute_bounds(dataset, 100.0);

  TrainOptions options;
  options.strategy.kind = StrategyKind::Scfl;
  options.strategy.deadline = 1.0;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 0.5 / bounds.zeta;
  options.epochs = 80;
  options.f_star = least_squares_optimum(dataset).f_star;
  options.bounds = bounds;
  options.rho = 0.0;

  const RunRecord record = train(dataset, &coded, profile, streams, options);
  REQUIRE(record.epochs.size() == 80);
  for (std::size_t r = 1; r < record.epochs.size(); ++r) {
    CHECK(record.epochs[r].loss <= record.epochs[r - 1].loss * (1.0 + 1e-9));
  }
  CHECK(record.epochs.back().loss < record.epochs.front().loss);
  CHECK_FALSE(record.diverged);

  // Real coding at sigma = 0 still descends overall even though single
  // epochs may wiggle near the floor.
  const CodingConfig real_config{64, 0.0, NoiseConvention::CompositeUnit};
  const CodedDataset real_coded = encode_dataset(streams, dataset, real_config);
  const RunRecord noisy = train(dataset, &real_coded, profile, streams, options);
  CHECK_FALSE(noisy.diverged);
  CHECK(noisy.epochs.back().loss < 0.2 * noisy.epochs.front().loss);
}

TEST_CASE("train: deadline strategies advance the clock by T per epoch") {
  const FederatedDataset dataset = make_dataset(415, 24, 3, 1, 3);
  StreamFactory streams(416);
  const CodingConfig config{12, 0.0, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  DelayProfile profile = fast_profile(3);
  profile.clients.assign(3, ClientLink{1e6, 1e6, 0.2});
  profile.payload_bits = 1e5;
  profile.model_bits = 1e5;

  TrainOptions options;
  options.strategy.kind = StrategyKind::Scfl;
  options.strategy.deadline = 0.75;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 1e-3;
  options.epochs = 12;
  options.f_star = 0.0;
  options.bounds = compute_bounds(dataset, 10.0);
  options.rho = 0.0;

  const RunRecord record = train(dataset, &coded, profile, streams, options);
  REQUIRE(record.epochs.size() == 12);
  for (std::size_t r = 0; r < 12; ++r) {
    CHECK(record.epochs[r].clock_s ==
          doctest::Approx(0.75 * static_cast<double>(r + 1)).epsilon(1e-12));
  }
  CHECK(record.total_time_s == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("train: scfl and fl-pma coincide when coding is exact") {
  // Orthogonal projection stand-in: X~ = sqrt(c) X with c = m makes the
  // coded full gradient equal the exact gradient, so SCFL at full batches
  // and T -> infinity reduces to plain gradient descent, as does
  // FL-PMA(psi = 0).
  const std::size_t m = 30, d = 4, o = 2;
  const FederatedDataset dataset = make_dataset(417, m, d, o, 3);

  CodedDataset exact_coded;
  exact_coded.x_tilde = dataset.features() * std::sqrt(static_cast<double>(m));
  exact_coded.y_tilde = dataset.labels() * std::sqrt(static_cast<double>(m));
  exact_coded.config = CodingConfig{m, 0.0, NoiseConvention::CompositeUnit};
  exact_coded.effective_sigma_sq = 0.0;

  const DelayProfile profile = fast_profile(3);
  const BoundEstimates bounds = compute_bounds(dataset, 50.0);

  TrainOptions scfl_options;
  scfl_options.strategy.kind = StrategyKind::Scfl;
  scfl_options.strategy.deadline = 1e9;
  scfl_options.strategy.schedule = LrSchedule::Constant;
  scfl_options.strategy.eta = 0.4 / bounds.zeta;
  scfl_options.epochs = 40;
  scfl_options.f_star = 0.0;
  scfl_options.bounds = bounds;
  scfl_options.rho = 0.0;

  TrainOptions pma_options = scfl_options;
  pma_options.strategy.kind = StrategyKind::FlPma;
  pma_options.strategy.psi = 0.0;

  StreamFactory streams(418);
  const RunRecord scfl_run = train(dataset, &exact_coded, profile, streams, scfl_options);
  const RunRecord pma_run = train(dataset, nullptr, profile, streams, pma_options);

  REQUIRE(scfl_run.epochs.size() == 40);
  REQUIRE(pma_run.epochs.size() == 40);
  for (std::size_t i = 0; i < scfl_run.w_final.size(); ++i) {
    CHECK(scfl_run.w_final.data()[i] ==
          doctest::Approx(pma_run.w_final.data()[i]).epsilon(1e-9));
  }

  // Both reduce to descent with the exact gradient.
  const Matrix g0 = exact_gradient(dataset, Matrix(d, o));
  const double eta = scfl_options.strategy.eta;
  Matrix w1(d, o);
  w1.add_scaled(g0, -eta);
  CHECK(scfl_run.epochs[1].loss ==
        doctest::Approx(global_loss(dataset, w1)).epsilon(1e-9));
}

TEST_CASE("train: dp-cfl runs server-only epochs") {
  const FederatedDataset dataset = make_dataset(419, 24, 3, 1, 3);
  StreamFactory streams(420);
  const CodingConfig config{30, 0.2, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  const DelayProfile profile = fast_profile(3);

  TrainOptions options;
  options.strategy.kind = StrategyKind::DpCfl;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 1e-3;
  options.epochs = 6;
  options.f_star = 0.0;
  options.bounds = compute_bounds(dataset, 10.0);
  options.rho = 0.0;

  const RunRecord record = train(dataset, &coded, profile, streams, options);
  const double per_epoch = server_compute_time(profile, 30.0);
  for (std::size_t r = 0; r < record.epochs.size(); ++r) {
    CHECK(record.epochs[r].n_arrived == 0);
    CHECK(record.epochs[r].clock_s ==
          doctest::Approx(per_epoch * static_cast<double>(r + 1)).epsilon(1e-12));
  }
}

TEST_CASE("train: divergence guard names the epoch") {
  const FederatedDataset dataset = make_dataset(421, 24, 3, 1, 3);
  StreamFactory streams(422);
  const CodingConfig config{12, 0.0, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  const DelayProfile profile = fast_profile(3);

  TrainOptions options;
  options.strategy.kind = StrategyKind::Scfl;
  options.strategy.deadline = 1.0;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 50.0;  // far beyond 2 / zeta, guaranteed blow-up
  options.epochs = 200;
  options.f_star = 0.0;
  options.bounds = compute_bounds(dataset, 1e9);
  options.rho = 0.0;

  const RunRecord record = train(dataset, &coded, profile, streams, options);
  CHECK(record.diverged);
  CHECK(record.diverged_epoch > 1);
  CHECK(record.epochs.size() < 200);
  // The blow-up also trips the per-client residual bound flag.
  CHECK(record.kappa_violations > 0);
}

TEST_CASE("train: setup validation errors") {
  const FederatedDataset dataset = make_dataset(423, 24, 3, 1, 3);
  StreamFactory streams(424);
  const CodingConfig config{12, 0.5, NoiseConvention::CompositeUnit};
  const CodedDataset coded = encode_dataset(streams, dataset, config);
  DelayProfile profile = fast_profile(3);

  TrainOptions options;
  options.strategy.kind = StrategyKind::Scfl;
  options.strategy.deadline = 1.0;
  options.strategy.schedule = LrSchedule::Constant;
  options.strategy.eta = 0.01;
  options.epochs = 3;
  options.bounds = compute_bounds(dataset, 10.0);

  // Missing coded dataset.
  CHECK_THROWS_AS(train(dataset, nullptr, profile, streams, options), ConfigError);

  // cfl-fb rejects noisy coded data.
  TrainOptions fb = options;
  fb.strategy.kind = StrategyKind::CflFb;
  CHECK_THROWS_AS(train(dataset, &coded, profile, streams, fb), ConfigError);

  // Unreachable client: zero arrival probability under weighting.
  DelayProfile blocked = profile;
  blocked.clients[0].uplink_rate = 1e-6;  // one attempt alone exceeds any sane T
  CHECK_THROWS_AS(train(dataset, &coded, blocked, streams, options), ConfigError);
}
