#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace relcat {

// Dense row-major matrix of doubles. The forward kernels below compute every
// output row from its own input row only, with a fixed accumulation order, so
// a row's result does not depend on which other rows share the matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v);
  void add_inplace(const Matrix& other);
  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// out (+)= a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);
// out (+)= a * b^T
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate = false);

Matrix transpose(const Matrix& m);
Matrix gather_rows(const Matrix& m, std::span<const int> rows);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace relcat
