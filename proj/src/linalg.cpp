#include "airtp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace airtp {
namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffTol = 1e-12;

// Rotation that diagonalises the Hermitian pair [[a, b], [conj(b), d]].
// Columns p, q transform as
//   p' = c p - s e^{-i phi} q,   q' = s p + c e^{-i phi} q
// where b = |b| e^{i phi}.
struct Rotation {
  double c;
  double s;
  cplx phase;  // e^{-i phi}
  double t;    // tangent, for the diagonal update
};

Rotation make_rotation(double a, cplx b, double d) {
  const double g = std::abs(b);
  const double theta = (d - a) / (2.0 * g);
  double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  if (theta < 0.0) t = -t;
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  return {c, t * c, std::conj(b) / g, t};
}

void rotate_columns(ComplexMatrix& m, std::size_t p, std::size_t q, const Rotation& r) {
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const cplx mp = m(k, p);
    const cplx mq = r.phase * m(k, q);
    m(k, p) = r.c * mp - r.s * mq;
    m(k, q) = r.s * mp + r.c * mq;
  }
}

double off_norm_sq(const ComplexMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += 2.0 * std::norm(a(i, j));
  return s;
}

// Jacobi sweeps on `a` (Hermitian, overwritten), accumulating into `v`.
HermitianEigenResult jacobi(ComplexMatrix a, ComplexMatrix v, double scale) {
  const std::size_t n = a.rows();
  const double tol = kOffTol * scale;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (std::sqrt(off_norm_sq(a)) <= tol) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx b = a(p, q);
        if (std::abs(b) <= std::numeric_limits<double>::min()) continue;
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const Rotation r = make_rotation(app, b, aqq);
        const double g = std::abs(b);
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const cplx kp = a(k, p);
          const cplx kq = r.phase * a(k, q);
          const cplx np = r.c * kp - r.s * kq;
          const cplx nq = r.s * kp + r.c * kq;
          a(k, p) = np;
          a(k, q) = nq;
          a(p, k) = std::conj(np);
          a(q, k) = std::conj(nq);
        }
        a(p, p) = app - r.t * g;
        a(q, q) = aqq + r.t * g;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        rotate_columns(v, p, q, r);
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i).real() > a(j, j).real(); });
  HermitianEigenResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors = ComplexMatrix(v.rows(), n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]).real();
    for (std::size_t i = 0; i < v.rows(); ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

void require_square(const ComplexMatrix& m, const char* what) {
  if (!m.is_square() || m.rows() == 0)
    throw DimensionError(std::string(what) + ": expected a non-empty square matrix, got " +
                         detail::shape_str(m.rows(), m.cols()));
}

}  // namespace

void require_hermitian(const ComplexMatrix& m, double tol) {
  require_square(m, "hermitian check");
  double asym = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i; j < m.cols(); ++j) {
      const double d = std::norm(m(i, j) - std::conj(m(j, i)));
      asym += (i == j) ? d : 2.0 * d;
    }
  if (std::sqrt(asym) > tol * frobenius_norm(m))
    throw NotHermitianError("matrix is not Hermitian (asymmetry " + std::to_string(std::sqrt(asym)) +
                            ")");
}

ComplexMatrix hermitian_part(const ComplexMatrix& m) {
  require_square(m, "hermitian_part");
  ComplexMatrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out(i, i) = m(i, i).real();
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      const cplx v = 0.5 * (m(i, j) + std::conj(m(j, i)));
      out(i, j) = v;
      out(j, i) = std::conj(v);
    }
  }
  return out;
}

HermitianEigenResult hermitian_eig(const ComplexMatrix& m) {
  require_hermitian(m);
  const std::size_t n = m.rows();
  return jacobi(hermitian_part(m), ComplexMatrix::identity(n), frobenius_norm(m));
}

HermitianEigenResult hermitian_eig(const ComplexMatrix& m, const ComplexMatrix& warm_vectors) {
  require_hermitian(m);
  if (warm_vectors.rows() != m.rows() || warm_vectors.cols() != m.cols())
    throw DimensionError("warm-start eigenvectors must match the matrix shape");
  ComplexMatrix a = hermitian_part(adjoint_times(warm_vectors, m * warm_vectors));
  return jacobi(std::move(a), warm_vectors, frobenius_norm(m));
}

SvdResult svd(const ComplexMatrix& m) {
  if (m.rows() < m.cols()) {
    SvdResult t = svd(m.adjoint());
    std::swap(t.u, t.v);
    return t;
  }
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  ComplexMatrix u = m;
  ComplexMatrix v = ComplexMatrix::identity(n);

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0;
        cplx gamma = 0.0;
        for (std::size_t k = 0; k < rows; ++k) {
          alpha += std::norm(u(k, p));
          beta += std::norm(u(k, q));
          gamma += std::conj(u(k, p)) * u(k, q);
        }
        const double g = std::abs(gamma);
        if (g <= 1e-15 * std::sqrt(alpha * beta) || g <= std::numeric_limits<double>::min()) continue;
        rotated = true;
        const Rotation r = make_rotation(alpha, gamma, beta);
        rotate_columns(u, p, q, r);
        rotate_columns(v, p, q, r);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < rows; ++k) s += std::norm(u(k, j));
    norms[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });

  SvdResult out;
  out.u = ComplexMatrix(rows, n);
  out.v = ComplexMatrix(n, n);
  out.singular.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    const double s = norms[src];
    out.singular[j] = s;
    for (std::size_t k = 0; k < rows; ++k) out.u(k, j) = s > 0.0 ? u(k, src) / s : cplx{};
    for (std::size_t k = 0; k < n; ++k) out.v(k, j) = v(k, src);
  }
  return out;
}

ComplexMatrix pseudo_inverse(const ComplexMatrix& m) {
  if (m.empty()) return ComplexMatrix(m.cols(), m.rows());
  const SvdResult s = svd(m);
  const double cutoff = 1e-10 * s.singular.front();
  ComplexMatrix out(m.cols(), m.rows());
  for (std::size_t j = 0; j < s.singular.size(); ++j) {
    if (s.singular[j] <= cutoff || s.singular[j] == 0.0) continue;
    const double inv = 1.0 / s.singular[j];
    for (std::size_t r = 0; r < out.rows(); ++r) {
      const cplx vr = s.v(r, j) * inv;
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vr * std::conj(s.u(c, j));
    }
  }
  return out;
}

ComplexMatrix hermitian_inverse(const ComplexMatrix& m, double* condition) {
  const HermitianEigenResult e = hermitian_eig(m);
  const double hi = e.eigenvalues.front();
  const double lo = e.eigenvalues.back();
  const double cond = (lo > 0.0 && hi > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!std::isfinite(cond)) throw NotPsdError("matrix is singular or indefinite");
  std::vector<double> inv(e.eigenvalues.size());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / e.eigenvalues[i];
  return reconstruct(e.eigenvectors, inv);
}

ComplexMatrix cholesky_inverse(const ComplexMatrix& l) {
  const std::size_t n = l.rows();
  ComplexMatrix out(n, n);
  std::vector<cplx> e(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(e.begin(), e.end(), cplx{});
    e[j] = 1.0;
    const std::vector<cplx> col = cholesky_solve<cplx>(l, e);
    for (std::size_t i = 0; i < n; ++i) out(i, j) = col[i];
  }
  return hermitian_part(out);
}

ComplexMatrix reconstruct(const ComplexMatrix& v, std::span<const double> w) {
  if (v.cols() != w.size()) throw DimensionError("reconstruct: eigenvalue count mismatch");
  const std::size_t n = v.rows();
  ComplexMatrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      cplx acc = 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) {
        if (w[k] == 0.0) continue;
        acc += v(i, k) * w[k] * std::conj(v(j, k));
      }
      out(i, j) = acc;
      out(j, i) = std::conj(acc);
    }
    out(i, i) = out(i, i).real();
  }
  return out;
}

std::vector<double> simplex_projection(std::span<const double> v) {
  if (v.empty()) throw DimensionError("simplex_projection of an empty vector");
  for (double x : v)
    if (!std::isfinite(x)) throw DomainError("simplex_projection: non-finite entry");

  // Feasible inputs come back untouched, which keeps the map exactly idempotent.
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (std::abs(total - 1.0) <= 1e-12 && std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0; }))
    return {v.begin(), v.end()};

  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumsum += u[k];
    const double candidate = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - candidate > 0.0) theta = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

ComplexMatrix psd_trace1_projection(const ComplexMatrix& m) {
  const HermitianEigenResult e = hermitian_eig(m);
  const std::vector<double> w = simplex_projection(e.eigenvalues);
  return reconstruct(e.eigenvectors, w);
}

ComplexMatrix matrix_sqrt_psd(const ComplexMatrix& m) {
  const HermitianEigenResult e = hermitian_eig(m);
  const double scale = frobenius_norm(m);
  std::vector<double> root(e.eigenvalues.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const double l = e.eigenvalues[i];
    if (l < -1e-6 * scale)
      throw NotPsdError("matrix_sqrt_psd: eigenvalue " + std::to_string(l) + " is significantly negative");
    root[i] = std::sqrt(std::max(l, 0.0));
  }
  return reconstruct(e.eigenvectors, root);
}

std::optional<std::vector<double>> lu_solve(RealMatrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  if (!a.is_square() || b.size() != n) throw DimensionError("lu_solve shape mismatch");
  double big = 0.0;
  for (double v : a.values()) big = std::max(big, std::abs(v));
  if (!(big > 0.0)) return std::nullopt;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    if (!(std::abs(a(piv, col)) > 1e-14 * big)) return std::nullopt;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(col, j));
      std::swap(b[piv], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) b[i] -= a(i, j) * b[j];
    b[i] /= a(i, i);
  }
  return b;
}

}  // namespace airtp
