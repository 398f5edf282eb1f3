#pragma once

// Test-side reference implementations. They share no code with the library
// beyond the Matrix container, so a bug in a library kernel cannot hide in
// the oracle that checks it.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <vector>

#include "airtp/matrix.hpp"

namespace oracle {

using airtp::ComplexMatrix;
using airtp::cplx;
using airtp::RealMatrix;

inline ComplexMatrix random_complex(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double mean = 0.0) {
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
  ComplexMatrix m(rows, cols);
  for (auto& v : m.values()) v = cplx(mean + nd(gen), nd(gen));
  return m;
}

inline RealMatrix random_real(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  RealMatrix m(rows, cols);
  for (auto& v : m.values()) v = nd(gen);
  return m;
}

inline ComplexMatrix random_hermitian(std::size_t n, std::mt19937_64& gen) {
  const ComplexMatrix a = random_complex(n, n, gen);
  ComplexMatrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = (a(i, j) + std::conj(a(j, i))) * 0.5;
  return h;
}

template <typename T>
airtp::Matrix<T> matmul(const airtp::Matrix<T>& a, const airtp::Matrix<T>& b) {
  airtp::Matrix<T> out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      T s{};
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline ComplexMatrix herm(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
  return out;
}

template <typename T>
double frob_diff(const airtp::Matrix<T>& a, const airtp::Matrix<T>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::norm(a.data()[i] - b.data()[i]);
  return std::sqrt(s);
}

template <typename T>
double frob(const airtp::Matrix<T>& a) {
  double s = 0.0;
  for (const auto& v : a.values()) s += std::norm(v);
  return std::sqrt(s);
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Gauss-Jordan inverse with partial pivoting.
inline ComplexMatrix inverse(ComplexMatrix a) {
  const std::size_t n = a.rows();
  ComplexMatrix inv = ComplexMatrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a(col, j), a(piv, j));
      std::swap(inv(col, j), inv(piv, j));
    }
    const cplx d = a(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      a(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const cplx f = a(r, col);
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

/// Largest eigenvalue of a Hermitian PSD matrix by power iteration.
inline double power_max_eig(const ComplexMatrix& m, std::size_t iters = 2000) {
  std::vector<cplx> v(m.rows(), cplx(1.0, 0.3));
  double lambda = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<cplx> w(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) w[i] += m(i, j) * v[j];
    double norm = 0.0;
    for (const auto& x : w) norm += std::norm(x);
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (auto& x : w) x /= norm;
    lambda = norm;
    v = std::move(w);
  }
  return lambda;
}

/// Smallest eigenvalue of a Hermitian positive definite matrix, as
/// 1 / lambda_max(M^{-1}).
inline double min_eig_pd(const ComplexMatrix& m) { return 1.0 / power_max_eig(inverse(m)); }

/// Duchi et al. sort-based projection onto the probability simplex.
inline std::vector<double> simplex_projection(std::vector<double> v) {
  std::vector<double> u(v);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (double& x : v) x = std::max(x - theta, 0.0);
  return v;
}

/// Matrix with orthonormal columns from modified Gram-Schmidt.
inline ComplexMatrix orthonormal_columns(ComplexMatrix a) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      cplx d = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) d += std::conj(a(i, k)) * a(i, j);
      for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) -= d * a(i, k);
    }
    double n = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) n += std::norm(a(i, j));
    n = std::sqrt(n);
    for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) /= n;
  }
  return a;
}

/// Ordinary least squares of y on x: slope and R^2.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

}  // namespace oracle
