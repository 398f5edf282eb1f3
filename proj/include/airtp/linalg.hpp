#pragma once

#include <optional>
#include <span>
#include <vector>

#include "airtp/matrix.hpp"

namespace airtp {

struct HermitianEigenResult {
  std::vector<double> eigenvalues;  // descending
  ComplexMatrix eigenvectors;       // column i pairs with eigenvalues[i]
};

struct SvdResult {
  ComplexMatrix u;                  // rows x k, orthonormal columns
  std::vector<double> singular;     // k = min(rows, cols), descending
  ComplexMatrix v;                  // cols x k, orthonormal columns
};

/// Throws NotHermitianError unless ||M - M^H||_F <= tol * ||M||_F.
void require_hermitian(const ComplexMatrix& m, double tol = 1e-8);

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
HermitianEigenResult hermitian_eig(const ComplexMatrix& m);

/// Same, seeded with a unitary guess for the eigenvectors. When the guess is
/// close (e.g. eigenvectors of a nearby matrix) only a sweep or two is needed.
HermitianEigenResult hermitian_eig(const ComplexMatrix& m, const ComplexMatrix& warm_vectors);

/// Thin SVD by one-sided Jacobi.
SvdResult svd(const ComplexMatrix& m);

/// Moore-Penrose inverse; singular values <= 1e-10 * sigma_max count as zero.
ComplexMatrix pseudo_inverse(const ComplexMatrix& m);

/// Inverse of a Hermitian positive definite matrix via its eigendecomposition.
/// `condition` receives lambda_max / lambda_min (infinity when singular).
ComplexMatrix hermitian_inverse(const ComplexMatrix& m, double* condition = nullptr);

/// Euclidean projection onto {x >= 0, sum x = 1}.
std::vector<double> simplex_projection(std::span<const double> v);

/// Nearest point of {X >= 0, tr X = 1} in Frobenius norm.
ComplexMatrix psd_trace1_projection(const ComplexMatrix& m);

/// Hermitian square root V diag(sqrt(lambda)) V^H of a PSD matrix.
ComplexMatrix matrix_sqrt_psd(const ComplexMatrix& m);

/// Lower Cholesky factor L (M = L L^H) of a Hermitian/symmetric positive
/// definite matrix, or nullopt when M is not numerically positive definite.
template <typename T>
std::optional<Matrix<T>> cholesky(const Matrix<T>& m) {
  if (!m.is_square()) throw DimensionError("cholesky of a non-square matrix");
  const std::size_t n = m.rows();
  Matrix<T> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = std::real(m(j, j));
    for (std::size_t k = 0; k < j; ++k) d -= std::norm(l(j, k));
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = T{ljj};
    for (std::size_t i = j + 1; i < n; ++i) {
      T acc = m(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * detail::conj_if(l(j, k));
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

/// Solves (L L^H) x = b given the Cholesky factor L.
template <typename T>
std::vector<T> cholesky_solve(const Matrix<T>& l, std::span<const T> b) {
  const std::size_t n = l.rows();
  if (b.size() != n) throw DimensionError("cholesky_solve: right-hand side length mismatch");
  std::vector<T> y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= detail::conj_if(l(k, i)) * y[k];
    y[i] /= detail::conj_if(l(i, i));
  }
  return y;
}

/// Solves A x = b for square real A by Gaussian elimination with partial
/// pivoting; nullopt when a pivot falls below 1e-14 of the largest entry.
std::optional<std::vector<double>> lu_solve(RealMatrix a, std::vector<double> b);

/// (L L^H)^{-1} from the Cholesky factor.
ComplexMatrix cholesky_inverse(const ComplexMatrix& l);

/// log det(L L^H) from the Cholesky factor.
template <typename T>
double cholesky_logdet(const Matrix<T>& l) {
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(std::real(l(i, i)));
  return 2.0 * s;
}

/// V diag(w) V^H.
ComplexMatrix reconstruct(const ComplexMatrix& v, std::span<const double> w);

/// Copies the Hermitian part (M + M^H) / 2, which removes rounding asymmetry.
ComplexMatrix hermitian_part(const ComplexMatrix& m);

}  // namespace airtp
