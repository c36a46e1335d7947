#include "scfl/rng.hpp"

#include <cmath>
#include <numbers>

#include "scfl/random_matrix.hpp"

namespace scfl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer (Steele, Lea, Flood; Vigna's fixed-increment variant).
std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - next_uniform();  // (0, 1], keeps log finite
  const double u2 = next_uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

RngStream StreamFactory::stream(Stream purpose, std::uint64_t a, std::uint64_t b) const {
  std::uint64_t s = root_seed_;
  const std::uint64_t fields[3] = {static_cast<std::uint64_t>(purpose), a, b};
  for (std::uint64_t v : fields) {
    s += kGolden;
    s ^= mix64(v + kGolden);
    s = mix64(s);
  }
  return RngStream(s);
}

Matrix gaussian_matrix(RngStream& stream, std::size_t rows, std::size_t cols, double std_dev) {
  Matrix out(rows, cols);
  if (std_dev == 0.0) return out;
  for (double& v : out.data()) v = std_dev * stream.next_gaussian();
  out.check_finite("gaussian_matrix");
  return out;
}

std::vector<std::uint8_t> bernoulli_mask(RngStream& stream, std::size_t size, double prob) {
  std::vector<std::uint8_t> mask(size);
  for (auto& bit : mask) bit = stream.next_bernoulli(prob) ? 1 : 0;
  return mask;
}

Matrix bernoulli_diag(RngStream& stream, std::size_t size, double prob) {
  const auto mask = bernoulli_mask(stream, size, prob);
  Matrix out(size, size);
  for (std::size_t i = 0; i < size; ++i) out(i, i) = mask[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace scfl
