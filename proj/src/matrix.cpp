#include "gpc/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "gpc/simd.hpp"

namespace gpc {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DimensionMismatch: return "dimension mismatch";
    case ErrorKind::NonSquare: return "non-square matrix";
    case ErrorKind::NonSymmetric: return "non-symmetric matrix";
    case ErrorKind::NotPositiveDefinite: return "not positive definite";
    case ErrorKind::Singular: return "singular matrix";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::NotPowerOfTwo: return "length is not a power of two";
    case ErrorKind::OperatorNotSpd: return "operator not SPD";
    case ErrorKind::NotConverged: return "not converged";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

AllocationLedger& AllocationLedger::instance() noexcept {
  static AllocationLedger ledger;
  return ledger;
}

void AllocationLedger::on_allocate(std::size_t bytes) noexcept {
  allocations_.fetch_add(1, std::memory_order_relaxed);
  const auto now = current_.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed) +
                   static_cast<std::int64_t>(bytes);
  auto peak = peak_.load(std::memory_order_relaxed);
  while (now > peak && !peak_.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void AllocationLedger::on_deallocate(std::size_t bytes) noexcept {
  deallocations_.fetch_add(1, std::memory_order_relaxed);
  current_.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
}

std::int64_t AllocationLedger::reset_peak() noexcept {
  const auto now = current_.load(std::memory_order_relaxed);
  peak_.store(now, std::memory_order_relaxed);
  return now;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, Vector data) : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::DimensionMismatch, "data length must equal rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, ErrorKind::DimensionMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require(all_finite(data_), ErrorKind::NonFinite, "matrix literal contains NaN/Inf");
}

Matrix Matrix::from_values(std::size_t rows, std::size_t cols, std::span<const double> values) {
  require(values.size() == rows * cols, ErrorKind::DimensionMismatch, "data length must equal rows*cols");
  require(all_finite(values), ErrorKind::NonFinite, "matrix input contains NaN/Inf");
  return Matrix(rows, cols, Vector(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) { return from_values(values.size(), 1, values); }

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] < rows_, ErrorKind::InvalidArgument, "row index out of range");
    std::copy_n(row(indices[k]).data(), cols_, out.row(k).data());
  }
  return out;
}

Matrix Matrix::row_range(std::size_t begin, std::size_t end) const {
  require(begin <= end && end <= rows_, ErrorKind::InvalidArgument, "row range out of bounds");
  Matrix out(end - begin, cols_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>(end * cols_), out.data());
  return out;
}

Vector to_vector(std::span<const double> values) { return Vector(values.begin(), values.end()); }

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "dot: length mismatch");
  return simd::dot(a.data(), b.data(), a.size());
}

double norm2(std::span<const double> a) { return std::sqrt(simd::dot(a.data(), a.data(), a.size())); }

double norm_inf(std::span<const double> a) noexcept {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace gpc
