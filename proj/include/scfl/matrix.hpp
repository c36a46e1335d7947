#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "scfl/errors.hpp"

namespace scfl {

// Dense row-major matrix of 64-bit reals. Every public operation leaves all
// entries finite; violations raise NumericError. Instances are treated as
// immutable once handed to another component, so they are safe to share
// read-only across threads.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {entries_.data() + r * cols_, cols_};
  }

  std::span<double> data() { return entries_; }
  std::span<const double> data() const { return entries_; }

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  // Adds s * other without allocating a temporary.
  Matrix& add_scaled(const Matrix& other, double s);

  void check_finite(const char* context) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double frobenius_norm_sq(const Matrix& a);
double frobenius_norm(const Matrix& a);

// Entrywise inner product <A, B>.
double dot(const Matrix& a, const Matrix& b);

Matrix take_rows(const Matrix& a, std::span<const std::size_t> indices);

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);

}  // namespace scfl
