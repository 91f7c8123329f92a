#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/rng.hpp"

namespace mvhet {

// Dense row-major 64-bit float matrix. The workhorse value type behind the
// autodiff tape and the evaluation kit.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
    assert(rows >= 0 && cols >= 0);
  }

  static Mat scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return m;
  }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row_ptr(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw Error(ErrorKind::ShapeMismatch, "matmul: (" + std::to_string(a.rows()) + "x" +
                                              std::to_string(a.cols()) + ")*(" +
                                              std::to_string(b.rows()) + "x" +
                                              std::to_string(b.cols()) + ")");
  Mat out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      for (int j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Mat add(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "add: shapes differ");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

inline Mat sub(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "sub: shapes differ");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

inline Mat hadamard(const Mat& a, const Mat& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::ShapeMismatch, "hadamard: shapes differ");
  Mat out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

inline Mat scale(const Mat& a, double c) {
  Mat out = a;
  for (double& v : out.data()) v *= c;
  return out;
}

inline Mat relu(const Mat& a) {
  Mat out = a;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

inline double dot_rows(const Mat& a, int i, const Mat& b, int j) {
  assert(a.cols() == b.cols());
  double s = 0.0;
  const double* ra = a.row_ptr(i);
  const double* rb = b.row_ptr(j);
  for (int k = 0; k < a.cols(); ++k) s += ra[k] * rb[k];
  return s;
}

inline double frobenius_norm(const Mat& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  assert(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool all_finite(const Mat& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Gaussian matrix, entries iid N(0, stddev^2).
inline Mat gaussian(int rows, int cols, double stddev, Rng& rng) {
  Mat out(rows, cols);
  for (double& v : out.data()) v = stddev * rng.normal();
  return out;
}

// Glorot/Xavier uniform init.
inline Mat glorot(int rows, int cols, Rng& rng) {
  double a = std::sqrt(6.0 / (rows + cols));
  Mat out(rows, cols);
  for (double& v : out.data()) v = a * (2.0 * rng.uniform() - 1.0);
  return out;
}

// Gaussian matrix with orthonormalized columns (rows >= cols) or rows
// (rows < cols), via modified Gram-Schmidt.
inline Mat orthonormal(int rows, int cols, Rng& rng) {
  bool by_cols = rows >= cols;
  int n = by_cols ? cols : rows;
  int dim = by_cols ? rows : cols;
  std::vector<std::vector<double>> vs(n, std::vector<double>(dim));
  for (auto& v : vs)
    for (double& x : v) x = rng.normal();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      double d = 0.0;
      for (int k = 0; k < dim; ++k) d += vs[i][k] * vs[j][k];
      for (int k = 0; k < dim; ++k) vs[i][k] -= d * vs[j][k];
    }
    double norm = 0.0;
    for (double x : vs[i]) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (double& x : vs[i]) x /= norm;
  }
  Mat out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out(i, j) = by_cols ? vs[j][i] : vs[i][j];
  return out;
}

// Compressed sparse row adjacency with sorted, duplicate-free column
// indices per row. Values are implicitly 1.
class Csr {
 public:
  Csr() = default;
  Csr(int rows, int cols, std::vector<std::pair<int, int>> pairs) : rows_(rows), cols_(cols) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    offsets_.assign(rows + 1, 0);
    cols_idx_.reserve(pairs.size());
    for (const auto& [r, c] : pairs) {
      if (r < 0 || r >= rows || c < 0 || c >= cols)
        throw Error(ErrorKind::EndpointOutOfRange,
                    "edge (" + std::to_string(r) + "," + std::to_string(c) + ") out of range");
      ++offsets_[r + 1];
      cols_idx_.push_back(c);
    }
    for (int r = 0; r < rows; ++r) offsets_[r + 1] += offsets_[r];
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return cols_idx_.size(); }
  int row_begin(int r) const { return offsets_[r]; }
  int row_end(int r) const { return offsets_[r + 1]; }
  int row_size(int r) const { return offsets_[r + 1] - offsets_[r]; }
  int col_at(int k) const { return cols_idx_[k]; }

  std::vector<int> row(int r) const {
    return std::vector<int>(cols_idx_.begin() + offsets_[r], cols_idx_.begin() + offsets_[r + 1]);
  }

  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    out.reserve(nnz());
    for (int r = 0; r < rows_; ++r)
      for (int k = offsets_[r]; k < offsets_[r + 1]; ++k) out.emplace_back(r, cols_idx_[k]);
    return out;
  }

  Csr transposed() const {
    std::vector<std::pair<int, int>> flipped;
    flipped.reserve(nnz());
    for (const auto& [r, c] : pairs()) flipped.emplace_back(c, r);
    return Csr(cols_, rows_, std::move(flipped));
  }

  bool operator==(const Csr& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && offsets_ == o.offsets_ &&
           cols_idx_ == o.cols_idx_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> offsets_{0};
  std::vector<int> cols_idx_;
};

}  // namespace mvhet
