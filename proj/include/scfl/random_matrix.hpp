#pragma once

#include <cstdint>
#include <vector>

#include "scfl/matrix.hpp"
#include "scfl/rng.hpp"

namespace scfl {

// i.i.d. N(0, std_dev^2) entries, filled in row-major order.
Matrix gaussian_matrix(RngStream& stream, std::size_t rows, std::size_t cols, double std_dev);

// 0/1 mask, each entry independently 1 with probability prob.
std::vector<std::uint8_t> bernoulli_mask(RngStream& stream, std::size_t size, double prob);

// Diagonal 0/1 matrix with Bernoulli(prob) diagonal entries.
Matrix bernoulli_diag(RngStream& stream, std::size_t size, double prob);

}  // namespace scfl
