#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "scfl/matrix.hpp"
#include "scfl/rng.hpp"

namespace scfl {

struct SyntheticData {
  Matrix features;  // m x d, entries in [-1, 1)
  Matrix labels;    // m x o, X * W_true + noise
  Matrix w_true;    // d x o, for diagnostics
};

SyntheticData generate_synthetic(RngStream& stream, std::size_t m, std::size_t d,
                                 std::size_t o, double noise_std,
                                 double ground_truth_scale);

using Partition = std::vector<std::vector<std::size_t>>;

// Rows sorted by the first label column (random tie order), then split into
// n contiguous shards; the last shard absorbs any remainder.
Partition skewed_partition(RngStream& stream, const Matrix& labels, std::size_t n);

// Random balanced assignment, same shard sizes as the skewed split.
Partition iid_partition(RngStream& stream, std::size_t m, std::size_t n);

// Global (X, Y) plus disjoint per-client row index lists covering all rows.
// Feature entries must satisfy |x| <= 1; violations raise ConfigError.
class FederatedDataset {
 public:
  FederatedDataset(Matrix features, Matrix labels, Partition partitions);

  const Matrix& features() const { return features_; }
  const Matrix& labels() const { return labels_; }
  const Partition& partitions() const { return partitions_; }

  std::size_t n_clients() const { return partitions_.size(); }
  std::size_t n_samples() const { return features_.rows(); }
  std::size_t n_features() const { return features_.cols(); }
  std::size_t n_outputs() const { return labels_.cols(); }
  std::size_t client_size(std::size_t i) const { return partitions_[i].size(); }

  const Matrix& client_features(std::size_t i) const { return client_features_[i]; }
  const Matrix& client_labels(std::size_t i) const { return client_labels_[i]; }

 private:
  Matrix features_;
  Matrix labels_;
  Partition partitions_;
  std::vector<Matrix> client_features_;
  std::vector<Matrix> client_labels_;
};

// z(x) = s * cos(x Omega + b) with Omega ~ N(0, 1/bandwidth^2), b ~ U[0, 2pi)
// and s = min(sqrt(2 / target_dim), 1) so outputs stay within [-1, 1].
Matrix rffm_transform(RngStream& stream, const Matrix& raw, std::size_t target_dim,
                      double bandwidth);

// Concrete constants for the norm bounds: zeta_i^2 = |X^(i)|_F^2 exactly,
// alpha_i = zeta_i, kappa_i = 2 |Y^(i)|_F (residual at the zero initial
// model, with slack factor 2), phi = phi_cap.
struct BoundEstimates {
  std::vector<double> zeta_i;
  std::vector<double> alpha_i;
  std::vector<double> kappa_i;
  double phi = 0.0;
  double zeta = 0.0;   // sum of zeta_i^2
  double alpha = 0.0;  // sum of alpha_i^2
  double kappa = 0.0;  // sum of kappa_i^2
};

BoundEstimates compute_bounds(const FederatedDataset& dataset, double phi_cap);

// Dense text block: first line "rows d o", then rows lines of d+o decimals.
void write_dense_file(const std::string& path, const Matrix& x, const Matrix& y);
std::pair<Matrix, Matrix> read_dense_file(const std::string& path);

// Same format, additionally enforcing |entry| <= 1 on the features.
std::pair<Matrix, Matrix> load_feature_file(const std::string& path);

}  // namespace scfl
