#include "relcat/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace relcat {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  values_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw std::invalid_argument("ragged matrix literal");
    values_.insert(values_.end(), r.begin(), r.end());
  }
}

void Matrix::fill(double v) {
  for (double& x : values_) x = v;
}

void Matrix::add_inplace(const Matrix& other) {
  if (!same_shape(other)) throw std::invalid_argument("add_inplace: shape mismatch");
  const double* src = other.data();
  double* dst = values_.data();
  for (std::size_t i = 0; i < values_.size(); ++i) dst[i] += src[i];
}

namespace {

void check_out(Matrix& out, std::size_t rows, std::size_t cols, bool accumulate) {
  if (accumulate) {
    if (out.rows() != rows || out.cols() != cols)
      throw std::invalid_argument("matmul: accumulate target has wrong shape");
  } else if (out.rows() != rows || out.cols() != cols) {
    out = Matrix(rows, cols);
  } else {
    out.fill(0.0);
  }
}

}  // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()));
  check_out(out, a.rows(), b.cols(), accumulate);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_b: row mismatch");
  check_out(out, a.cols(), b.cols(), accumulate);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* ar = a.data() + r * k;
    const double* br = b.data() + r * m;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out, bool accumulate) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_a_bt: column mismatch");
  matmul(a, transpose(b), out, accumulate);
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

Matrix gather_rows(const Matrix& m, std::span<const int> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(static_cast<std::size_t>(rows[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine of zero-norm vector");
  return dot(a, b) / (na * nb);
}

}  // namespace relcat
