#pragma once

// Small dense helpers over std::vector<double>.  Dimensions in this artifact
// stay in the tens, so plain loops beat pulling in a matrix library.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace isobound {

using Vec = std::vector<double>;

namespace detail {

inline double dot(const Vec& a, const Vec& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec sub(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vec scaled(const Vec& a, double s) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

// a += s * b
inline void axpy(Vec& a, double s, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

inline double distance(const Vec& a, const Vec& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace detail

// Row-major dense matrix, only as expressive as the generators need.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Vec values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw std::invalid_argument("matrix data size does not match shape");
    }
  }

  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }

  Vec apply(const Vec& x) const {
    Vec out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < cols; ++c) sum += data[r * cols + c] * x[c];
      out[r] = sum;
    }
    return out;
  }

  Vec apply_transpose(const Vec& y) const {
    Vec out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        out[c] += data[r * cols + c] * y[r];
      }
    }
    return out;
  }
};

namespace detail {

// Solves the symmetric positive-definite system M x = b in place via
// Cholesky; used for least-squares latent recovery through normal equations.
inline Vec spd_solve(Matrix m, Vec b) {
  const std::size_t n = m.rows;
  if (m.cols != n || b.size() != n) {
    throw std::invalid_argument("spd_solve: shape mismatch");
  }
  // Factor M = L L^T.
  for (std::size_t j = 0; j < n; ++j) {
    double diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= m(j, k) * m(j, k);
    if (diag <= 0.0) {
      throw std::runtime_error("spd_solve: matrix not positive definite");
    }
    m(j, j) = std::sqrt(diag);
    for (std::size_t i = j + 1; i < n; ++i) {
      double sum = m(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= m(i, k) * m(j, k);
      m(i, j) = sum / m(j, j);
    }
  }
  // Forward then backward substitution.
  for (std::size_t i = 0; i < n; ++i) {
    double sum = b[i];
    for (std::size_t k = 0; k < i; ++k) sum -= m(i, k) * b[k];
    b[i] = sum / m(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double sum = b[i];
    for (std::size_t k = i + 1; k < n; ++k) sum -= m(k, i) * b[k];
    b[i] = sum / m(i, i);
  }
  return b;
}

}  // namespace detail
}  // namespace isobound
