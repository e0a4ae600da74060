#pragma once

// Small dense linear algebra helpers. Problem dimensions here are the number
// of lifts / cycles of a resort graph, so everything is plain row-major
// std::vector storage with no blocking or sparsity.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace cyclequil {

using Vec = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

inline Vec mat_vec(const Matrix& a, const Vec& x) {
  if (x.size() != a.cols) throw std::invalid_argument("mat_vec: dimension mismatch");
  Vec y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double s = 0.0;
    const double* row = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < a.cols; ++j) s += row[j] * x[j];
    y[i] = s;
  }
  return y;
}

// y = Aᵀ x
inline Vec mat_tvec(const Matrix& a, const Vec& x) {
  if (x.size() != a.rows) throw std::invalid_argument("mat_tvec: dimension mismatch");
  Vec y(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* row = a.data.data() + i * a.cols;
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += row[j] * x[i];
  }
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// In-place lower Cholesky of a symmetric positive definite matrix.
// Returns false if a non-positive pivot is met.
inline bool cholesky_factor(Matrix& a) {
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a(j, j) = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / l;
    }
  }
  return true;
}

inline Vec cholesky_solve(const Matrix& l, Vec b) {
  const std::size_t n = l.rows;
  for (std::size_t i = 0; i < n; ++i) {  // L y = b
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {  // Lᵀ x = y
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b[k];
    b[ii] = s / l(ii, ii);
  }
  return b;
}

// Solve A x = b for symmetric positive (semi)definite A, adding a growing
// diagonal ridge until the factorization succeeds. Returns false only if the
// matrix stays unfactorable at a large ridge, which means the input is junk.
inline bool solve_spd(Matrix a, const Vec& b, Vec& x) {
  double diag_max = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i) diag_max = std::max(diag_max, std::abs(a(i, i)));
  double ridge = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Matrix f = a;
    if (ridge > 0.0)
      for (std::size_t i = 0; i < f.rows; ++i) f(i, i) += ridge;
    if (cholesky_factor(f)) {
      x = cholesky_solve(f, b);
      return true;
    }
    ridge = (ridge == 0.0) ? 1e-12 * (diag_max + 1.0) : ridge * 100.0;
  }
  return false;
}

}  // namespace cyclequil
