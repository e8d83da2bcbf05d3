#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "camue/error.hpp"

namespace camue {

/// Keep freed matrix buffers inside the heap instead of returning them to the
/// kernel. Training allocates and frees many same-sized n×d buffers per epoch,
/// and fresh mmap'd pages cost a fault per 4 KiB on first touch. Call once from main.
inline void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

/// Row-major dense matrix of doubles. Vectors are 1×k or k×1 matrices.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged initializer for DenseMatrix");
      std::copy(row.begin(), row.end(), m.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
      ++i;
    }
    return m;
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

using EigenRowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EigenRowMatrix> as_eigen(const DenseMatrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline Eigen::Map<EigenRowMatrix> as_eigen(DenseMatrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace detail

/// a·b
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  DenseMatrix c(a.rows(), b.cols());
  if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return c;
  detail::as_eigen(c).noalias() = detail::as_eigen(a) * detail::as_eigen(b);
  return c;
}

/// aᵀ·b
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + a.shape_string() + " by " + b.shape_string());
  }
  DenseMatrix c(a.cols(), b.cols());
  if (a.rows() == 0 || c.size() == 0) return c;
  detail::as_eigen(c).noalias() = detail::as_eigen(a).transpose() * detail::as_eigen(b);
  return c;
}

/// a·bᵀ
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: cannot multiply " + a.shape_string() + " by transpose of " + b.shape_string());
  }
  DenseMatrix c(a.rows(), b.rows());
  if (a.cols() == 0 || c.size() == 0) return c;
  detail::as_eigen(c).noalias() = detail::as_eigen(a) * detail::as_eigen(b).transpose();
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// dst += scale * src
inline void axpy(DenseMatrix& dst, const DenseMatrix& src, double scale = 1.0) {
  detail::require_same_shape(dst, src, "axpy");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
}

inline double sum(const DenseMatrix& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return total;
}

inline double frobenius_norm(const DenseMatrix& a) {
  double total = 0.0;
  for (double v : a.data()) total += v * v;
  return std::sqrt(total);
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

enum class Duplicates { kSum, kKeepOne };

/// Compressed-sparse-row matrix. Column indices are strictly increasing within
/// each row and every stored value is finite.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  explicit SparseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
               std::vector<std::size_t> col_idx, std::vector<double> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries,
                                    Duplicates duplicates = Duplicates::kSum) {
    for (const auto& t : entries) {
      if (t.row >= rows || t.col >= cols) {
        throw ShapeError("sparse entry (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                         ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
      }
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> row_ptr(rows + 1, 0);
    std::vector<std::size_t> col_idx;
    std::vector<double> values;
    col_idx.reserve(entries.size());
    values.reserve(entries.size());
    std::size_t last_row = rows;
    std::size_t last_col = cols;
    for (const auto& t : entries) {
      if (t.row == last_row && t.col == last_col) {
        if (duplicates == Duplicates::kSum) values.back() += t.value;
        continue;
      }
      col_idx.push_back(t.col);
      values.push_back(t.value);
      ++row_ptr[t.row + 1];
      last_row = t.row;
      last_col = t.col;
    }
    for (std::size_t r = 0; r < rows; ++r) row_ptr[r + 1] += row_ptr[r];
    return SparseMatrix(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
  }

  static SparseMatrix from_dense(const DenseMatrix& d) {
    std::vector<Triplet> entries;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) entries.push_back({i, j, d(i, j)});
    return from_triplets(d.rows(), d.cols(), std::move(entries));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const noexcept {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const noexcept {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(std::size_t r, std::size_t c) const {
    auto cols = row_cols(r);
    auto it = std::lower_bound(cols.begin(), cols.end(), c);
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
  }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  DenseMatrix to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
    return d;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> entries;
    entries.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) entries.push_back({col_idx_[k], r, values_[k]});
    return from_triplets(cols_, rows_, std::move(entries));
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  void validate() const {
    if (row_ptr_.size() != rows_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != col_idx_.size() ||
        col_idx_.size() != values_.size()) {
      throw ShapeError("malformed CSR arrays for " + shape_string());
    }
    for (std::size_t r = 0; r < rows_; ++r) {
      if (row_ptr_[r] > row_ptr_[r + 1]) throw ShapeError("CSR row pointers must be non-decreasing");
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        if (col_idx_[k] >= cols_) throw ShapeError("CSR column index out of range in row " + std::to_string(r));
        if (k > row_ptr_[r] && col_idx_[k] <= col_idx_[k - 1]) {
          throw ShapeError("CSR column indices not strictly increasing in row " + std::to_string(r));
        }
        if (!std::isfinite(values_[k])) throw NumericError("non-finite CSR value in row " + std::to_string(r));
      }
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// a·b with a sparse.
namespace detail {

// c[:, :width] += a·b[:, :width]; b and c are row-major with leading dimensions ldb, ldc.
inline void spmm_accumulate(const SparseMatrix& a, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                            std::size_t width) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double* __restrict out = c + r * ldc;
    auto cols = a.row_cols(r);
    auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double* __restrict in = b + cols[k] * ldb;
      const double v = vals[k];
      for (std::size_t j = 0; j < width; ++j) out[j] += v * in[j];
    }
  }
}

// c[:, :width] += aᵀ·b[:, :width]
inline void spmm_tn_accumulate(const SparseMatrix& a, const double* b, std::size_t ldb, double* c, std::size_t ldc,
                               std::size_t width) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* __restrict in = b + r * ldb;
    auto cols = a.row_cols(r);
    auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double* __restrict out = c + cols[k] * ldc;
      const double v = vals[k];
      for (std::size_t j = 0; j < width; ++j) out[j] += v * in[j];
    }
  }
}

}  // namespace detail

inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("sparse_dense_matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  DenseMatrix c(a.rows(), b.cols());
  detail::spmm_accumulate(a, b.data().data(), b.cols(), c.data().data(), c.cols(), b.cols());
  return c;
}

/// aᵀ·b with a sparse, without materialising the transpose.
inline DenseMatrix spmm_tn(const SparseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("sparse_dense_matmul: cannot multiply transpose of " + a.shape_string() + " by " +
                     b.shape_string());
  }
  DenseMatrix c(a.cols(), b.cols());
  detail::spmm_tn_accumulate(a, b.data().data(), b.cols(), c.data().data(), c.cols(), b.cols());
  return c;
}

}  // namespace camue
