#include "scfl/coding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scfl/random_matrix.hpp"

namespace scfl {

double per_client_noise_std(const CodingConfig& config, std::size_t n_clients) {
  if (config.sigma < 0.0) throw ConfigError("coding: sigma must be nonnegative");
  if (n_clients == 0) throw ConfigError("coding: no clients");
  if (config.convention == NoiseConvention::CompositeUnit) {
    return config.sigma / std::sqrt(static_cast<double>(n_clients));
  }
  return config.sigma;
}

double composite_noise_variance(const CodingConfig& config, std::size_t n_clients) {
  const double nu = per_client_noise_std(config, n_clients);
  return static_cast<double>(n_clients) * nu * nu;
}

CodedClient encode_client(RngStream& projection, RngStream& noise, const Matrix& x_i,
                          const Matrix& y_i, const CodingConfig& config,
                          std::size_t n_clients) {
  if (config.c == 0) throw ConfigError("coding: c must be positive");
  const Matrix g = gaussian_matrix(projection, config.c, x_i.rows(), 1.0);
  CodedClient out;
  out.x = matmul(g, x_i);
  const double nu = per_client_noise_std(config, n_clients);
  if (nu > 0.0) {
    out.x += gaussian_matrix(noise, config.c, x_i.cols(), nu);
  }
  out.y = matmul(g, y_i);
  return out;
}

CodedDataset build_composite(const std::vector<CodedClient>& parts,
                             const CodingConfig& config, std::size_t n_clients) {
  if (parts.empty()) throw ConfigError("coding: no coded parts to combine");
  CodedDataset out;
  out.x_tilde = parts.front().x;
  out.y_tilde = parts.front().y;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].x.rows() != config.c || parts.front().x.rows() != config.c) {
      throw ConfigError("coding: mismatched coded row count across clients");
    }
    out.x_tilde += parts[i].x;
    out.y_tilde += parts[i].y;
  }
  if (out.x_tilde.rows() != config.c) {
    throw ConfigError("coding: mismatched coded row count across clients");
  }
  out.config = config;
  out.effective_sigma_sq = composite_noise_variance(config, n_clients);
  return out;
}

CodedDataset encode_dataset(const StreamFactory& streams, const FederatedDataset& dataset,
                            const CodingConfig& config) {
  std::vector<CodedClient> parts;
  parts.reserve(dataset.n_clients());
  for (std::size_t i = 0; i < dataset.n_clients(); ++i) {
    RngStream projection = streams.stream(Stream::CodingProjection, i, 0);
    RngStream noise = streams.stream(Stream::CodingNoise, i, 0);
    parts.push_back(encode_client(projection, noise, dataset.client_features(i),
                                  dataset.client_labels(i), config,
                                  dataset.n_clients()));
  }
  return build_composite(parts, config, dataset.n_clients());
}

double h_value(const Matrix& x_i) {
  double min_sq = std::numeric_limits<double>::infinity();
  for (std::size_t col = 0; col < x_i.cols(); ++col) {
    double sum_sq = 0.0;
    double max_sq = 0.0;
    for (std::size_t row = 0; row < x_i.rows(); ++row) {
      const double sq = x_i(row, col) * x_i(row, col);
      sum_sq += sq;
      max_sq = std::max(max_sq, sq);
    }
    min_sq = std::min(min_sq, sum_sq - max_sq);
  }
  return std::sqrt(std::max(min_sq, 0.0));
}

PrivacyReport privacy_budget(const FederatedDataset& dataset, const CodingConfig& config) {
  PrivacyReport report;
  const double nu = per_client_noise_std(config, dataset.n_clients());
  const double nu_sq = nu * nu;
  report.per_client_h.reserve(dataset.n_clients());
  report.per_client_epsilon.reserve(dataset.n_clients());
  for (std::size_t i = 0; i < dataset.n_clients(); ++i) {
    const double h = h_value(dataset.client_features(i));
    const double denom = h * h + nu_sq;
    if (denom <= 0.0) {
      throw ConfigError("privacy: h = 0 and sigma = 0 gives an unbounded budget for client " +
                        std::to_string(i));
    }
    const double eps =
        0.5 * std::log2(1.0 + static_cast<double>(config.c) / denom);
    report.per_client_h.push_back(h);
    report.per_client_epsilon.push_back(eps);
    report.epsilon = std::max(report.epsilon, eps);
  }
  return report;
}

double calibrate_sigma(const FederatedDataset& dataset, std::size_t c,
                       double target_epsilon, NoiseConvention convention) {
  if (target_epsilon <= 0.0) {
    throw ConfigError("privacy: target_epsilon must be positive");
  }
  // eps_i <= t  <=>  h_i^2 + nu^2 >= c / (2^(2t) - 1); the binding client is
  // the one with the smallest h.
  double min_h_sq = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dataset.n_clients(); ++i) {
    const double h = h_value(dataset.client_features(i));
    min_h_sq = std::min(min_h_sq, h * h);
  }
  const double needed = static_cast<double>(c) / (std::exp2(2.0 * target_epsilon) - 1.0);
  const double nu_sq = std::max(0.0, needed - min_h_sq);
  if (convention == NoiseConvention::CompositeUnit) {
    return std::sqrt(nu_sq * static_cast<double>(dataset.n_clients()));
  }
  return std::sqrt(nu_sq);
}

void export_coded(const std::string& path, const CodedDataset& coded) {
  write_dense_file(path, coded.x_tilde, coded.y_tilde);
}

CodedDataset import_coded(const std::string& path, const CodingConfig& config,
                          std::size_t n_clients) {
  auto loaded = read_dense_file(path);
  if (loaded.first.rows() != config.c) {
    throw ConfigError(path + ": coded row count does not match configured c");
  }
  CodedDataset out;
  out.x_tilde = std::move(loaded.first);
  out.y_tilde = std::move(loaded.second);
  out.config = config;
  out.effective_sigma_sq = composite_noise_variance(config, n_clients);
  return out;
}

}  // namespace scfl
