#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "gpc/error.hpp"
#include "gpc/ledger.hpp"

namespace gpc {

using Vector = std::vector<double, TrackedAllocator<double>>;

/// Dense row-major matrix of doubles. Storage goes through the allocation ledger.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector data);

  /// Nested-list construction for small literals; rejects ragged rows and non-finite entries.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  /// Copies user data, rejecting NaN/Inf.
  static Matrix from_values(std::size_t rows, std::size_t cols, std::span<const double> values);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  Matrix transposed() const;
  /// Rows listed in `indices`, in order.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  Matrix row_range(std::size_t begin, std::size_t end) const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

Vector to_vector(std::span<const double> values);
bool all_finite(std::span<const double> values) noexcept;

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a) noexcept;
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace gpc
