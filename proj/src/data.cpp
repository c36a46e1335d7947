#include "scfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "scfl/random_matrix.hpp"

namespace scfl {

SyntheticData generate_synthetic(RngStream& stream, std::size_t m, std::size_t d,
                                 std::size_t o, double noise_std,
                                 double ground_truth_scale) {
  SyntheticData out;
  out.features = Matrix(m, d);
  for (double& v : out.features.data()) v = 2.0 * stream.next_uniform() - 1.0;

  // Uniform draws already satisfy the unit bound; rescale defensively in
  // case of future edits to the sampling law.
  double max_abs = 0.0;
  for (double v : out.features.data()) max_abs = std::max(max_abs, std::fabs(v));
  if (max_abs > 1.0) {
    out.features *= 1.0 / max_abs;
  }

  out.w_true = gaussian_matrix(stream, d, o, ground_truth_scale);
  out.labels = matmul(out.features, out.w_true);
  if (noise_std > 0.0) {
    out.labels += gaussian_matrix(stream, m, o, noise_std);
  }
  return out;
}

namespace {

Partition contiguous_shards(const std::vector<std::size_t>& order, std::size_t n) {
  const std::size_t m = order.size();
  if (n == 0) throw ConfigError("partition: n must be positive");
  if (n > m) throw ConfigError("partition: more clients than samples");
  const std::size_t base = m / n;
  Partition parts(n);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = base;
    if (i + 1 == n) count = m - pos;  // last shard absorbs the remainder
    parts[i].assign(order.begin() + pos, order.begin() + pos + count);
    pos += count;
  }
  return parts;
}

}  // namespace

Partition skewed_partition(RngStream& stream, const Matrix& labels, std::size_t n) {
  const std::size_t m = labels.rows();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> tiebreak(m);
  for (auto& t : tiebreak) t = stream.next_u64();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (labels(a, 0) != labels(b, 0)) return labels(a, 0) < labels(b, 0);
    return tiebreak[a] < tiebreak[b];
  });
  return contiguous_shards(order, n);
}

Partition iid_partition(RngStream& stream, std::size_t m, std::size_t n) {
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with the labeled stream.
  for (std::size_t i = m; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return contiguous_shards(order, n);
}

FederatedDataset::FederatedDataset(Matrix features, Matrix labels, Partition partitions)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      partitions_(std::move(partitions)) {
  const std::size_t m = features_.rows();
  if (labels_.rows() != m) throw ShapeError("dataset: feature/label row counts differ");
  if (partitions_.empty()) throw ConfigError("dataset: no client partitions");

  std::vector<std::uint8_t> seen(m, 0);
  std::size_t covered = 0;
  for (const auto& part : partitions_) {
    if (part.empty()) throw ConfigError("dataset: empty client partition");
    for (std::size_t idx : part) {
      if (idx >= m) throw ConfigError("dataset: partition index out of range");
      if (seen[idx]) throw ConfigError("dataset: partitions overlap");
      seen[idx] = 1;
      ++covered;
    }
  }
  if (covered != m) throw ConfigError("dataset: partitions do not cover all rows");

  for (double v : features_.data()) {
    if (std::fabs(v) > 1.0) {
      throw ConfigError("dataset: feature entry exceeds unit bound");
    }
  }

  client_features_.reserve(partitions_.size());
  client_labels_.reserve(partitions_.size());
  for (const auto& part : partitions_) {
    client_features_.push_back(take_rows(features_, part));
    client_labels_.push_back(take_rows(labels_, part));
  }
}

Matrix rffm_transform(RngStream& stream, const Matrix& raw, std::size_t target_dim,
                      double bandwidth) {
  if (target_dim == 0) throw ConfigError("rffm: target_dim must be positive");
  if (bandwidth <= 0.0) throw ConfigError("rffm: bandwidth must be positive");
  const Matrix omega =
      gaussian_matrix(stream, raw.cols(), target_dim, 1.0 / bandwidth);
  std::vector<double> phase(target_dim);
  for (double& p : phase) p = 2.0 * std::numbers::pi * stream.next_uniform();

  Matrix projected = matmul(raw, omega);
  const double scale = std::min(std::sqrt(2.0 / static_cast<double>(target_dim)), 1.0);
  for (std::size_t i = 0; i < projected.rows(); ++i) {
    auto row = projected.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = scale * std::cos(row[j] + phase[j]);
    }
  }
  projected.check_finite("rffm_transform");
  return projected;
}

BoundEstimates compute_bounds(const FederatedDataset& dataset, double phi_cap) {
  BoundEstimates out;
  const std::size_t n = dataset.n_clients();
  out.zeta_i.resize(n);
  out.alpha_i.resize(n);
  out.kappa_i.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double zeta_sq = frobenius_norm_sq(dataset.client_features(i));
    out.zeta_i[i] = std::sqrt(zeta_sq);
    out.alpha_i[i] = out.zeta_i[i];
    out.kappa_i[i] = 2.0 * frobenius_norm(dataset.client_labels(i));
    out.zeta += zeta_sq;
    out.alpha += zeta_sq;
    out.kappa += out.kappa_i[i] * out.kappa_i[i];
  }
  out.phi = phi_cap;
  return out;
}

void write_dense_file(const std::string& path, const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) throw ShapeError("write_dense_file: row counts differ");
  std::ofstream file(path);
  if (!file) throw ParseError("cannot open " + path + " for writing");
  char buf[64];
  file << x.rows() << ' ' << x.cols() << ' ' << y.cols() << '\n';
  for (std::size_t i = 0; i < x.rows(); ++i) {
    bool first = true;
    for (double v : x.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      file << (first ? "" : " ") << buf;
      first = false;
    }
    for (double v : y.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      file << ' ' << buf;
    }
    file << '\n';
  }
  if (!file) throw ParseError("write failed for " + path);
}

std::pair<Matrix, Matrix> read_dense_file(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ParseError("cannot open " + path);
  std::size_t m = 0, d = 0, o = 0;
  if (!(file >> m >> d >> o) || m == 0 || d == 0 || o == 0) {
    throw ParseError(path + ": malformed header, expected \"m d o\"");
  }
  Matrix x(m, d), y(m, o);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (!(file >> x(i, j))) throw ParseError(path + ": truncated feature row");
    }
    for (std::size_t j = 0; j < o; ++j) {
      if (!(file >> y(i, j))) throw ParseError(path + ": truncated label row");
    }
  }
  x.check_finite("read_dense_file");
  y.check_finite("read_dense_file");
  return {std::move(x), std::move(y)};
}

std::pair<Matrix, Matrix> load_feature_file(const std::string& path) {
  auto loaded = read_dense_file(path);
  for (double v : loaded.first.data()) {
    if (std::fabs(v) > 1.0) {
      throw ConfigError(path + ": feature entry exceeds unit bound");
    }
  }
  return loaded;
}

}  // namespace scfl
