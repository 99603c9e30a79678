#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "plm/error.hpp"

namespace plm::net {

// Dense row-major matrix over float or double.  This is deliberately a thin
// flat-storage type: the layers below need matrix-vector products, outer
// products and elementwise updates, nothing more.
template <typename S>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<S> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, S value = S(0)) : rows(r), cols(c), data(r * c, value) {}

  S* row(std::size_t i) { return data.data() + i * cols; }
  const S* row(std::size_t i) const { return data.data() + i * cols; }

  S& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  S at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  std::span<S> flat() { return {data.data(), data.size()}; }
  std::span<const S> flat() const { return {data.data(), data.size()}; }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n, S(0));
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = S(1);
    return m;
  }
};

template <typename S>
using Vector = std::vector<S>;

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

// y += A * x
template <typename S>
void matvec_add(const Matrix<S>& a, std::span<const S> x, std::span<S> y) {
  detail::require(a.cols == x.size() && a.rows == y.size(), "matvec_add: dimension mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const S* r = a.row(i);
    S acc = S(0);
    for (std::size_t j = 0; j < a.cols; ++j) acc += r[j] * x[j];
    y[i] += acc;
  }
}

// y += A^T * x
template <typename S>
void matvec_transpose_add(const Matrix<S>& a, std::span<const S> x, std::span<S> y) {
  detail::require(a.rows == x.size() && a.cols == y.size(),
                  "matvec_transpose_add: dimension mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    const S* r = a.row(i);
    const S xi = x[i];
    if (xi == S(0)) continue;
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += r[j] * xi;
  }
}

// A += u * v^T
template <typename S>
void outer_add(std::span<const S> u, std::span<const S> v, Matrix<S>& a) {
  detail::require(a.rows == u.size() && a.cols == v.size(), "outer_add: dimension mismatch");
  for (std::size_t i = 0; i < a.rows; ++i) {
    S* r = a.row(i);
    const S ui = u[i];
    if (ui == S(0)) continue;
    for (std::size_t j = 0; j < a.cols; ++j) r[j] += ui * v[j];
  }
}

// y += alpha * x
template <typename S>
void axpy(S alpha, std::span<const S> x, std::span<S> y) {
  detail::require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

template <typename S>
void fill(std::span<S> x, S value) {
  for (auto& v : x) v = value;
}

template <typename S>
double squared_norm(std::span<const S> x) {
  double acc = 0.0;
  for (S v : x) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

template <typename S>
bool all_finite(std::span<const S> x) {
  for (S v : x)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// Overflow-safe logistic function.
template <typename S>
S sigmoid(S x) {
  if (x >= S(0)) {
    return S(1) / (S(1) + std::exp(-x));
  }
  const S e = std::exp(x);
  return e / (S(1) + e);
}

}  // namespace plm::net
