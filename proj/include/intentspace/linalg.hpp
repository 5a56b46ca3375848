#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "intentspace/errors.hpp"

namespace intentspace {

// Dense real vector, 64-bit floats.
struct Vector {
  std::vector<double> data;

  Vector() = default;
  explicit Vector(std::size_t dim, double value = 0.0) : data(dim, value) {}
  Vector(std::initializer_list<double> init) : data(init) {}

  std::size_t dim() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double* begin() { return data.data(); }
  double* end() { return data.data() + data.size(); }
  const double* begin() const { return data.data(); }
  const double* end() const { return data.data() + data.size(); }

  bool operator==(const Vector&) const = default;
};

// Dense real matrix, row-major, 64-bit floats.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double value = 0.0)
      : rows(r), cols(c), data(r * c, value) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool operator==(const Matrix&) const = default;
};

inline bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// y = m * x
inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols != v.dim()) {
    throw ShapeError("matvec: matrix is " + std::to_string(m.rows) + "x" +
                     std::to_string(m.cols) + " but vector has dim " +
                     std::to_string(v.dim()));
  }
  Vector out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out[r] = dot({m.row(r), m.cols}, {v.data.data(), v.dim()});
  }
  return out;
}

// y = m^T * x, without materialising the transpose.
inline Vector matvec_transposed(const Matrix& m, const Vector& v) {
  if (m.rows != v.dim()) {
    throw ShapeError("matvec_transposed: matrix is " + std::to_string(m.rows) +
                     "x" + std::to_string(m.cols) + " but vector has dim " +
                     std::to_string(v.dim()));
  }
  Vector out(m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.row(r);
    double x = v[r];
    if (x == 0.0) continue;
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += x * row[c];
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector elementwise_sigmoid(const Vector& v) {
  Vector out(v.dim());
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

// Max-subtracted softmax; entries positive, sum 1.
inline Vector softmax(const Vector& v) {
  if (v.dim() == 0) throw ShapeError("softmax: empty input");
  double max = *std::max_element(v.begin(), v.end());
  Vector out(v.dim());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.dim(); ++i) {
    out[i] = std::exp(v[i] - max);
    sum += out[i];
  }
  for (std::size_t i = 0; i < v.dim(); ++i) out[i] /= sum;
  return out;
}

// a += s * b
inline void axpy(double s, std::span<const double> b, std::span<double> a) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

// m += s * x y^T
inline void outer_accumulate(Matrix& m, double s, std::span<const double> x,
                             std::span<const double> y) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    double xs = s * x[r];
    if (xs == 0.0) continue;
    double* row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += xs * y[c];
  }
}

inline double frobenius_dot(const Matrix& a, const Matrix& b) {
  return dot({a.data.data(), a.data.size()}, {b.data.data(), b.data.size()});
}

// c = a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// out += s * a * b^T
inline void matmul_abt_accumulate(Matrix& out, double s, const Matrix& a,
                                  const Matrix& b) {
  if (a.cols != b.cols || out.rows != a.rows || out.cols != b.rows) {
    throw ShapeError("matmul_abt_accumulate: shape mismatch");
  }
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      orow[j] += s * dot({arow, a.cols}, {b.row(j), b.cols});
    }
  }
}

// out += s * a^T * b
inline void matmul_atb_accumulate(Matrix& out, double s, const Matrix& a,
                                  const Matrix& b) {
  if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols) {
    throw ShapeError("matmul_atb_accumulate: shape mismatch");
  }
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      double av = s * arow[i];
      if (av == 0.0) continue;
      double* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace intentspace
