#include "airtp/short_term.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "airtp/linalg.hpp"
#include "airtp/parallel.hpp"
#include "airtp/rng.hpp"

namespace airtp {

void EnergyModel::validate(std::size_t n_devices) const {
  if (energy_coefficients.size() != n_devices)
    throw ConfigError("energy.coefficients has " + std::to_string(energy_coefficients.size()) +
                      " entries for " + std::to_string(n_devices) + " devices");
  if (power_budgets.size() != n_devices)
    throw ConfigError("energy.power_budgets has " + std::to_string(power_budgets.size()) +
                      " entries for " + std::to_string(n_devices) + " devices");
  for (double e : energy_coefficients)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("energy coefficients must be finite and >= 0");
  for (double p : power_budgets)
    if (!(p > 0.0) || !std::isfinite(p)) throw ConfigError("power budgets must be finite and > 0");
  if (!(weights_per_layer > 0.0) || !std::isfinite(weights_per_layer))
    throw ConfigError("weights_per_layer must be > 0");
  if (payload_total < 1) throw ConfigError("payload_total must be >= 1");
  if (payload_per_round < 1 || payload_per_round > payload_total)
    throw ConfigError("payload_per_round must lie in [1, payload_total]");
}

EnergyModel EnergyModel::uniform(std::size_t n_devices, double e, double s_tot, double p_max, std::size_t l0,
                                 std::size_t l) {
  EnergyModel m;
  m.energy_coefficients.assign(n_devices, e);
  m.power_budgets.assign(n_devices, p_max);
  m.weights_per_layer = s_tot;
  m.payload_total = l0;
  m.payload_per_round = l;
  return m;
}

std::vector<double> residual_power(std::span<const double> m, const EnergyModel& energy) {
  energy.validate(m.size());
  double total = 0.0;
  for (double v : m) {
    if (!(v >= -1e-12)) throw DomainError("model assignment has a negative entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-8) throw DomainError("model assignment does not sum to 1");
  std::vector<double> c(m.size());
  for (std::size_t n = 0; n < m.size(); ++n) {
    c[n] = energy.power_budgets[n] - energy.energy_coefficients[n] * std::max(m[n], 0.0) * energy.weights_per_layer;
    if (!(c[n] > 0.0)) throw InfeasibleAssignmentError(n, c[n]);
  }
  return c;
}

namespace {

void check_residual(const ChannelSet& channels, std::span<const double> c) {
  if (c.size() != channels.size())
    throw DimensionError("residual power vector length != device count");
  for (std::size_t n = 0; n < c.size(); ++n)
    if (!(c[n] > 0.0)) throw InfeasibleAssignmentError(n, c[n]);
}

// Single-stream rounds use the mean eigenvalue tr(H^H X H) / n_tx in place
// of lambda_min: with L = 1 the effective channel g^H H H^H g is a scalar,
// equal to tr(H^H G_hat H) for G_hat = g g^H, whereas lambda_min of the
// n_tx x n_tx matrix H^H G_hat H is identically zero at rank 1.
bool uses_mean_eig(std::size_t payload_per_round, std::size_t n_tx) {
  return payload_per_round == 1 && n_tx > 1;
}

// Per-device objective in reduced coordinates: lambda_min or mean
// eigenvalue of f^H X f.
double device_value(const ComplexMatrix& f, const ComplexMatrix& x, bool mean_eig) {
  const ComplexMatrix m = hermitian_part(adjoint_times(f, x * f));
  if (mean_eig) return trace(m).real() / static_cast<double>(m.rows());
  return hermitian_eig(m).eigenvalues.back();
}

// The relaxed problem restricted to span{H_n}: X = Q^H G_hat Q with
// f_n = sqrt(c_n) Q^H H_n (times sqrt(n_tx) in mean-eigenvalue form, so that
// the per-device value is c_n tr(H_n^H G_hat H_n)). Mass of G_hat outside
// that span never helps any device, so the restriction loses nothing.
struct ReducedProblem {
  ComplexMatrix basis;             // n_rx x r
  std::vector<ComplexMatrix> f;    // r x n_tx each
  bool mean_eig = false;
  std::size_t rank() const { return basis.cols(); }
};

ReducedProblem reduce(const ChannelSet& channels, std::span<const double> c, bool mean_eig) {
  const std::size_t n_rx = channels.n_rx();
  ComplexMatrix cover(n_rx, n_rx);
  for (const auto& h : channels.matrices) cover += times_adjoint(h, h);
  const HermitianEigenResult e = hermitian_eig(hermitian_part(cover));
  std::size_t r = 0;
  while (r < e.eigenvalues.size() && e.eigenvalues[r] > 1e-12 * e.eigenvalues.front()) ++r;
  ReducedProblem out;
  out.basis = e.eigenvectors.columns(0, r);
  out.mean_eig = mean_eig;
  const double k = mean_eig ? static_cast<double>(channels.n_tx()) : 1.0;
  for (std::size_t n = 0; n < channels.size(); ++n) {
    ComplexMatrix fn = adjoint_times(out.basis, channels[n]);
    fn *= cplx(std::sqrt(k * c[n]), 0.0);
    out.f.push_back(std::move(fn));
  }
  return out;
}

// Real basis of Hermitian k x k matrices: the k diagonal units, then for
// each a < b the pair e_ab + e_ba and i (e_ab - e_ba). Each element is a
// short list of (row, col, coefficient) terms.
struct BasisTerm {
  std::size_t row;
  std::size_t col;
  cplx coef;
};
using BasisElement = std::vector<BasisTerm>;

std::vector<BasisElement> hermitian_basis(std::size_t k) {
  std::vector<BasisElement> basis;
  for (std::size_t a = 0; a < k; ++a) basis.push_back({{a, a, 1.0}});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      basis.push_back({{a, b, 1.0}, {b, a, 1.0}});
      basis.push_back({{a, b, cplx(0.0, 1.0)}, {b, a, cplx(0.0, -1.0)}});
    }
  return basis;
}

// The single element I / k: Z_n restricted to multiples of the identity,
// which is the dual of the mean-eigenvalue objective.
std::vector<BasisElement> identity_basis(std::size_t k) {
  BasisElement e;
  for (std::size_t a = 0; a < k; ++a) e.push_back({a, a, 1.0 / static_cast<double>(k)});
  return {e};
}

// Coordinates of z in the span of `basis`. No two elements share the entry
// of their first term, so each coordinate is read off that entry.
void basis_coordinates(const std::vector<BasisElement>& basis, const ComplexMatrix& z, double* out) {
  for (std::size_t j = 0; j < basis.size(); ++j) {
    const BasisTerm& t = basis[j].front();
    out[j] = (z(t.row, t.col) / t.coef).real();
  }
}

// Re tr(P E).
double trace_with(const ComplexMatrix& p, const BasisElement& e) {
  cplx acc = 0.0;
  for (const auto& t : e) acc += t.coef * p(t.col, t.row);
  return acc.real();
}

// Re tr(E1 P E2 Q).
double trace_sandwich(const BasisElement& e1, const ComplexMatrix& p, const BasisElement& e2,
                      const ComplexMatrix& q) {
  cplx acc = 0.0;
  for (const auto& t1 : e1)
    for (const auto& t2 : e2) acc += t1.coef * t2.coef * p(t1.col, t2.row) * q(t2.col, t1.row);
  return acc.real();
}

// Barrier method on the dual of the relaxed problem:
//   minimise s  s.t.  s I - sum_n f_n Z_n f_n^H >= 0,  Z_n >= 0,  sum_n tr Z_n = 1
// (Z_n a multiple of I in mean-eigenvalue form).
// Its optimum equals t*, every feasible point bounds t* from above, and on
// the central path X = Y / tr Y with Y = (s I - M)^{-1} is a primal point
// while the slack stays well conditioned.
class DualBarrier {
 public:
  explicit DualBarrier(const ReducedProblem& prob)
      : prob_(prob),
        r_(prob.rank()),
        k_(prob.f.front().cols()),
        basis_(prob.mean_eig ? identity_basis(k_) : hermitian_basis(k_)) {
    dim_ = 1 + prob.f.size() * basis_.size();
  }

  struct Outcome {
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    ComplexMatrix x;  // best primal point, reduced coordinates
  };

  // Follows the central path until the gap closes, the iteration budget runs
  // out, or the primal recovered from Y stops being trustworthy (Y is the
  // inverse of an increasingly singular slack, so centrality drifts once t0
  // is large). The dual bound stays valid in every case.
  Outcome solve(const SdpOptions& opt, std::size_t& iterations) {
    const std::size_t n_dev = prob_.f.size();
    std::vector<double> x(dim_, 0.0);
    const ComplexMatrix z0 = ComplexMatrix::identity(k_) * cplx(1.0 / static_cast<double>(n_dev * k_), 0.0);
    for (std::size_t n = 0; n < n_dev; ++n) coordinates(z0, &x[offset(n)]);
    x[0] = 1.5 * trace(lmi_matrix(x)).real();

    double t0 = static_cast<double>(r_ + n_dev * k_) / x[0];
    Outcome out;
    while (iterations < opt.max_iters) {
      const bool stalled = !centre(x, t0, opt.max_iters, iterations);
      out.upper = std::min(out.upper, hermitian_eig(hermitian_part(lmi_matrix(x))).eigenvalues.front());
      const ComplexMatrix y = cholesky_inverse(*cholesky(slack(x)));
      const double tr_y = trace(y).real();
      if (stalled) break;
      // Far along the path the slack is too ill-conditioned for Y/tr Y to be
      // trusted, but the dual iterate itself keeps tightening the bound.
      if (std::abs(tr_y / t0 - 1.0) <= 1e-3) {
        ComplexMatrix xp = y;
        xp *= cplx(1.0 / tr_y, 0.0);
        double lower = std::numeric_limits<double>::infinity();
        for (const auto& fn : prob_.f)
          lower = std::min(lower, device_value(fn, xp, prob_.mean_eig));
        if (lower > out.lower) {
          out.lower = lower;
          out.x = std::move(xp);
        }
      }
      if (out.upper - out.lower <= opt.tolerance * std::abs(out.lower)) break;
      // Path gap (r + N k) / t0 bounds upper - t*; past this the primal side
      // has to close the rest.
      if (static_cast<double>(r_ + n_dev * k_) / t0 <= 0.1 * opt.tolerance * std::abs(out.lower)) break;
      t0 *= 8.0;
    }
    return out;
  }

 private:
  std::size_t offset(std::size_t n) const { return 1 + n * basis_.size(); }

  ComplexMatrix block(const std::vector<double>& x, std::size_t n) const {
    ComplexMatrix z(k_, k_);
    for (std::size_t j = 0; j < basis_.size(); ++j)
      for (const auto& t : basis_[j]) z(t.row, t.col) += x[offset(n) + j] * t.coef;
    return z;
  }

  ComplexMatrix lmi_matrix(const std::vector<double>& x) const {
    ComplexMatrix m(r_, r_);
    for (std::size_t n = 0; n < prob_.f.size(); ++n) m += prob_.f[n] * times_adjoint(block(x, n), prob_.f[n]);
    return hermitian_part(m);
  }

  ComplexMatrix slack(const std::vector<double>& x) const {
    ComplexMatrix s = lmi_matrix(x);
    s *= cplx(-1.0, 0.0);
    for (std::size_t i = 0; i < r_; ++i) s(i, i) += x[0];
    return s;
  }

  bool feasible(const std::vector<double>& x) const {
    if (!cholesky(slack(x))) return false;
    for (std::size_t n = 0; n < prob_.f.size(); ++n)
      if (!cholesky(block(x, n))) return false;
    return true;
  }

  void coordinates(const ComplexMatrix& z, double* out) const { basis_coordinates(basis_, z, out); }

  // Newton centring for fixed t0, with damped steps 1/(1 + lambda) as the
  // barrier is self-concordant (no objective evaluations in the line search,
  // which would drown in rounding once t0 is large). Each block Z_n = R R^H
  // is parameterised as R W R^H around the current point, which turns its
  // barrier Hessian into the identity and keeps the Newton system well scaled.
  // Returns false when the Newton system becomes numerically singular.
  bool centre(std::vector<double>& x, double t0, std::size_t max_iters, std::size_t& iterations) const {
    const std::size_t n_dev = prob_.f.size();
    const std::size_t nb = basis_.size();

    for (int inner = 0; inner < 100 && iterations < max_iters; ++inner) {
      ++iterations;
      const ComplexMatrix y = cholesky_inverse(*cholesky(slack(x)));
      std::vector<ComplexMatrix> rf, yg, chol;
      for (std::size_t n = 0; n < n_dev; ++n) {
        chol.push_back(*cholesky(block(x, n)));
        rf.push_back(prob_.f[n] * chol.back());  // scaled factor F_n R_n
        yg.push_back(y * rf.back());
      }
      std::vector<double> g(dim_, 0.0), a(dim_, 0.0);
      RealMatrix h(dim_, dim_);
      g[0] = t0 - trace(y).real();
      h(0, 0) = gram_trace(y);
      for (std::size_t n = 0; n < n_dev; ++n) {
        const ComplexMatrix cnn = adjoint_times(rf[n], yg[n]);
        const ComplexMatrix dn = adjoint_times(yg[n], yg[n]);
        const ComplexMatrix rr = adjoint_times(chol[n], chol[n]);
        const ComplexMatrix eye = ComplexMatrix::identity(k_);
        for (std::size_t j = 0; j < nb; ++j) {
          g[offset(n) + j] = trace_with(cnn, basis_[j]) - trace_with(eye, basis_[j]);
          a[offset(n) + j] = trace_with(rr, basis_[j]);
          const double hs = -trace_with(dn, basis_[j]);
          h(0, offset(n) + j) = hs;
          h(offset(n) + j, 0) = hs;
        }
        for (std::size_t m = n; m < n_dev; ++m) {
          const ComplexMatrix cnm = adjoint_times(rf[n], yg[m]);
          const ComplexMatrix cmn = cnm.adjoint();
          for (std::size_t i = 0; i < nb; ++i)
            for (std::size_t j = 0; j < nb; ++j) {
              double v = trace_sandwich(basis_[i], cnm, basis_[j], cmn);
              if (m == n) v += trace_sandwich(basis_[i], eye, basis_[j], eye);
              h(offset(n) + i, offset(m) + j) = v;
              h(offset(m) + j, offset(n) + i) = v;
            }
        }
      }

      // Symmetric diagonal scaling before factorising.
      std::vector<double> d(dim_);
      for (std::size_t i = 0; i < dim_; ++i) d[i] = 1.0 / std::sqrt(h(i, i));
      for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) h(i, j) *= d[i] * d[j];
      auto lh = cholesky(h);
      for (double ridge = 1e-14; !lh && ridge < 1e-4; ridge *= 100.0) {
        RealMatrix hr = h;
        for (std::size_t i = 0; i < dim_; ++i) hr(i, i) += ridge;
        lh = cholesky(hr);
      }
      if (!lh) return false;
      std::vector<double> gs(dim_), as(dim_);
      for (std::size_t i = 0; i < dim_; ++i) {
        gs[i] = d[i] * g[i];
        as[i] = d[i] * a[i];
      }
      const std::vector<double> v1 = cholesky_solve<double>(*lh, gs);
      const std::vector<double> v2 = cholesky_solve<double>(*lh, as);
      const double w = -std::inner_product(as.begin(), as.end(), v1.begin(), 0.0) /
                       std::inner_product(as.begin(), as.end(), v2.begin(), 0.0);
      std::vector<double> dw(dim_);
      for (std::size_t i = 0; i < dim_; ++i) dw[i] = d[i] * (-v1[i] - w * v2[i]);
      const double decrement = -std::inner_product(g.begin(), g.end(), dw.begin(), 0.0);
      if (decrement <= 1e-12) return true;

      // Back to x coordinates: dZ_n = R_n dW_n R_n^H.
      std::vector<double> dx(dim_);
      dx[0] = dw[0];
      for (std::size_t n = 0; n < n_dev; ++n) {
        ComplexMatrix dwn(k_, k_);
        for (std::size_t j = 0; j < nb; ++j)
          for (const auto& t : basis_[j]) dwn(t.row, t.col) += dw[offset(n) + j] * t.coef;
        coordinates(chol[n] * times_adjoint(dwn, chol[n]), &dx[offset(n)]);
      }

      const double lambda = std::sqrt(std::max(decrement, 0.0));
      double step = lambda < 0.25 ? 1.0 : 1.0 / (1.0 + lambda);
      std::vector<double> trial(dim_);
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        for (std::size_t i = 0; i < dim_; ++i) trial[i] = x[i] + step * dx[i];
        if (feasible(trial)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) return false;
      x = trial;
      if (decrement <= 1e-10) return true;
    }
    return true;
  }

  const ReducedProblem& prob_;
  std::size_t r_;
  std::size_t k_;
  std::vector<BasisElement> basis_;
  std::size_t dim_ = 0;
};

// Barrier method on the primal problem restricted to a subspace U that
// carries the optimal G_hat:
//   maximise nu  s.t.  f_n^H U Xi U^H f_n - nu I >= 0,  Xi >= 0,  tr Xi = 1
// (the 1 x 1 block tr(f_n^H U Xi U^H f_n) / n_tx - nu >= 0 in mean-eigenvalue form).
// Every iterate is primal feasible and its objective is evaluated directly,
// so unlike the path-recovered primal it cannot be corrupted by an
// ill-conditioned slack. Used to close the gap once the dual has converged.
class PrimalPolish {
 public:
  PrimalPolish(const ReducedProblem& prob, const ComplexMatrix& u)
      : u_(u),
        p_(u.cols()),
        mean_eig_(prob.mean_eig),
        k_(prob.mean_eig ? 1 : prob.f.front().cols()),
        basis_(hermitian_basis(p_)) {
    for (const auto& fn : prob.f) ft_.push_back(adjoint_times(u, fn));
    dim_ = 1 + basis_.size();
    // Constant coefficient matrices of every LMI block, one per variable.
    for (const auto& f : ft_) {
      std::vector<ComplexMatrix> coef;
      coef.push_back(ComplexMatrix::identity(k_) * cplx(-1.0, 0.0));
      for (const auto& e : basis_) {
        ComplexMatrix m = hermitian_part(adjoint_times(f, as_matrix(e) * f));
        if (mean_eig_) m = ComplexMatrix{{trace(m) / static_cast<double>(m.rows())}};
        coef.push_back(std::move(m));
      }
      blocks_.push_back(std::move(coef));
    }
    std::vector<ComplexMatrix> own;
    own.emplace_back(p_, p_);
    for (const auto& e : basis_) own.push_back(as_matrix(e));
    blocks_.push_back(std::move(own));
  }

  // Lower bound achieved by Xi (reduced to the subspace).
  double value(const ComplexMatrix& xi) const {
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& f : ft_) lo = std::min(lo, device_value(f, xi, mean_eig_));
    return lo;
  }

  // Improves (lower, x) in place, stopping at the target gap against `upper`.
  void run(ComplexMatrix xi, double upper, const SdpOptions& opt, std::size_t& iterations, double& lower,
           ComplexMatrix& best_x) const {
    double start = value(xi);
    if (!(start > 0.0)) return;
    std::vector<double> x(dim_, 0.0);
    coordinates(xi, &x[1]);
    x[0] = start - std::max(0.5 * (upper - start), 1e-9 * start);
    double t0 = static_cast<double>(ft_.size() * k_ + p_) / std::max(upper - start, 1e-12 * upper);
    while (iterations < opt.max_iters) {
      const bool stalled = !centre(x, t0, opt.max_iters, iterations);
      const ComplexMatrix cand = matrix_of(x);
      const double v = value(cand);
      if (v > lower) {
        lower = v;
        best_x = u_ * times_adjoint(cand, u_);
      }
      if (stalled || upper - lower <= opt.tolerance * std::abs(lower)) return;
      t0 *= 8.0;
    }
  }

 private:
  ComplexMatrix as_matrix(const BasisElement& e) const {
    ComplexMatrix m(p_, p_);
    for (const auto& t : e) m(t.row, t.col) += t.coef;
    return m;
  }

  ComplexMatrix matrix_of(const std::vector<double>& x) const {
    ComplexMatrix m(p_, p_);
    for (std::size_t j = 0; j < basis_.size(); ++j)
      for (const auto& t : basis_[j]) m(t.row, t.col) += x[1 + j] * t.coef;
    return m;
  }

  void coordinates(const ComplexMatrix& z, double* out) const { basis_coordinates(basis_, z, out); }

  ComplexMatrix block_value(std::size_t b, const std::vector<double>& x) const {
    const auto& coef = blocks_[b];
    ComplexMatrix m(coef.front().rows(), coef.front().cols());
    for (std::size_t j = 0; j < dim_; ++j)
      if (x[j] != 0.0) m += coef[j] * cplx(x[j], 0.0);
    return m;
  }

  bool feasible(const std::vector<double>& x) const {
    for (std::size_t b = 0; b < blocks_.size(); ++b)
      if (!cholesky(block_value(b, x))) return false;
    return true;
  }

  // Damped Newton on t0 * (-nu) - sum_b logdet(block_b(x)) with tr Xi = 1.
  bool centre(std::vector<double>& x, double t0, std::size_t max_iters, std::size_t& iterations) const {
    std::vector<double> a(dim_, 0.0);
    for (std::size_t j = 0; j < basis_.size(); ++j) a[1 + j] = trace(as_matrix(basis_[j])).real();
    for (int inner = 0; inner < 100 && iterations < max_iters; ++inner) {
      ++iterations;
      std::vector<double> g(dim_, 0.0);
      g[0] = -t0;
      RealMatrix h(dim_, dim_);
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const ComplexMatrix si = cholesky_inverse(*cholesky(block_value(b, x)));
        std::vector<ComplexMatrix> t;
        t.reserve(dim_);
        for (std::size_t j = 0; j < dim_; ++j) t.push_back(si * blocks_[b][j]);
        for (std::size_t j = 0; j < dim_; ++j) {
          g[j] -= trace(t[j]).real();
          for (std::size_t l = j; l < dim_; ++l) {
            double acc = 0.0;
            for (std::size_t i = 0; i < t[j].rows(); ++i)
              for (std::size_t q = 0; q < t[j].cols(); ++q) acc += (t[j](i, q) * t[l](q, i)).real();
            h(j, l) += acc;
            if (l != j) h(l, j) += acc;
          }
        }
      }
      std::vector<double> d(dim_);
      for (std::size_t i = 0; i < dim_; ++i) d[i] = h(i, i) > 0.0 ? 1.0 / std::sqrt(h(i, i)) : 1.0;
      for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) h(i, j) *= d[i] * d[j];
      auto lh = cholesky(h);
      for (double ridge = 1e-14; !lh && ridge < 1e-4; ridge *= 100.0) {
        RealMatrix hr = h;
        for (std::size_t i = 0; i < dim_; ++i) hr(i, i) += ridge;
        lh = cholesky(hr);
      }
      if (!lh) return false;
      std::vector<double> gs(dim_), as(dim_);
      for (std::size_t i = 0; i < dim_; ++i) {
        gs[i] = d[i] * g[i];
        as[i] = d[i] * a[i];
      }
      const std::vector<double> v1 = cholesky_solve<double>(*lh, gs);
      const std::vector<double> v2 = cholesky_solve<double>(*lh, as);
      const double w = -std::inner_product(as.begin(), as.end(), v1.begin(), 0.0) /
                       std::inner_product(as.begin(), as.end(), v2.begin(), 0.0);
      std::vector<double> dx(dim_);
      for (std::size_t i = 0; i < dim_; ++i) dx[i] = d[i] * (-v1[i] - w * v2[i]);
      const double decrement = -std::inner_product(g.begin(), g.end(), dx.begin(), 0.0);
      if (decrement <= 1e-12) return true;
      const double lambda = std::sqrt(decrement);
      double step = lambda < 0.25 ? 1.0 : 1.0 / (1.0 + lambda);
      std::vector<double> trial(dim_);
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        for (std::size_t i = 0; i < dim_; ++i) trial[i] = x[i] + step * dx[i];
        if (feasible(trial)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) return false;
      x = trial;
      if (decrement <= 1e-10) return true;
    }
    return true;
  }

  ComplexMatrix u_;
  std::size_t p_;
  bool mean_eig_;
  std::size_t k_;  // size of each device block
  std::vector<BasisElement> basis_;
  std::vector<ComplexMatrix> ft_;
  std::vector<std::vector<ComplexMatrix>> blocks_;
  std::size_t dim_ = 0;
};

}  // namespace

double relaxed_objective(const ComplexMatrix& x, const ChannelSet& channels, std::span<const double> c,
                         std::size_t payload_per_round) {
  if (c.size() != channels.size()) throw DimensionError("residual power vector length != device count");
  const bool mean_eig = uses_mean_eig(payload_per_round, channels.n_tx());
  double t = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const double v = device_value(channels[n], x, mean_eig);
    t = std::min(t, c[n] * (mean_eig ? v * static_cast<double>(channels.n_tx()) : v));
  }
  return t;
}

RelaxedSdpResult solve_relaxed_sdp(const ChannelSet& channels, std::span<const double> c,
                                   const EnergyModel& energy, const SdpOptions& options) {
  if (channels.size() == 0) throw DimensionError("solve_relaxed_sdp: no devices");
  check_residual(channels, c);

  // lambda_min(H^H X H) <= lambda_max(X) lambda_min(H^H H) <= lambda_min(H^H H)
  // on the spectrahedron, so a rank-deficient H_n pins t* to zero. The
  // mean-eigenvalue form only needs H_n != 0.
  const bool mean_eig = uses_mean_eig(energy.payload_per_round, channels.n_tx());
  double simple_upper = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const ComplexMatrix hh = hermitian_part(adjoint_times(channels[n], channels[n]));
    const double reach = mean_eig ? trace(hh).real() : hermitian_eig(hh).eigenvalues.back();
    simple_upper = std::min(simple_upper, c[n] * reach);
  }
  if (!(simple_upper > 1e-12))
    throw DegenerateChannelError("relaxed beamforming problem is degenerate: some device is unreachable");

  const ReducedProblem prob = reduce(channels, c, mean_eig);
  RelaxedSdpResult out;
  auto dual = DualBarrier(prob).solve(options, out.iterations);
  const auto done = [&] { return dual.upper - dual.lower <= options.tolerance * std::abs(dual.lower); };

  // Polish on the dominant eigenspace of the path primal, widening the
  // subspace once if the first guess was too narrow.
  if (!done() && dual.lower > 0.0) {
    const HermitianEigenResult ex = hermitian_eig(dual.x);
    const std::size_t k = channels.n_tx();
    for (double cut : {1e-3, 1e-6}) {
      std::size_t p = 0;
      while (p < ex.eigenvalues.size() && ex.eigenvalues[p] > cut * ex.eigenvalues.front()) ++p;
      p = std::min(std::max(p, k), ex.eigenvalues.size());
      const ComplexMatrix u = ex.eigenvectors.columns(0, p);
      ComplexMatrix xi = hermitian_part(adjoint_times(u, dual.x * u));
      xi *= cplx(1.0 / trace(xi).real(), 0.0);
      PrimalPolish(prob, u).run(std::move(xi), dual.upper, options, out.iterations, dual.lower, dual.x);
      if (done() || out.iterations >= options.max_iters) break;
    }
  }
  out.value = dual.lower;
  out.upper_bound = dual.upper;
  out.g_hat = dual.x;
  if (!(out.value > 1e-12))
    throw DegenerateChannelError("relaxed beamforming optimum is zero: some device is unreachable");
  out.g_hat = hermitian_part(prob.basis * times_adjoint(out.g_hat, prob.basis));
  out.value = relaxed_objective(out.g_hat, channels, c, energy.payload_per_round);
  out.upper_bound = std::max(out.upper_bound, out.value);
  out.alpha_lb = static_cast<double>(energy.payload_total) / out.upper_bound;
  out.certified = out.upper_bound - out.value <= options.tolerance * out.value;
  return out;
}

std::vector<double> device_scale_terms(const ComplexMatrix& g, const ChannelSet& channels,
                                       const EnergyModel& energy) {
  const double norm = gram_trace(g);
  if (std::abs(norm - 1.0) > 1e-8) throw DomainError("normalised beamformer must satisfy tr(G G^H) = 1");
  const double ratio = static_cast<double>(energy.payload_total) / static_cast<double>(g.cols());
  std::vector<double> t(channels.size());
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const ComplexMatrix k = adjoint_times(g, channels[n]);
    const HermitianEigenResult e = hermitian_eig(hermitian_part(times_adjoint(k, k)));
    const double hi = e.eigenvalues.front();
    const double lo = e.eigenvalues.back();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond < kMaxZfCondition)) throw IllConditionedChannelError(n, cond);
    double tr_inv = 0.0;
    for (double l : e.eigenvalues) tr_inv += 1.0 / l;
    t[n] = ratio * tr_inv;
  }
  return t;
}

double alpha_for_G(const ComplexMatrix& g, const ChannelSet& channels, std::span<const double> c,
                   const EnergyModel& energy) {
  check_residual(channels, c);
  const std::vector<double> t = device_scale_terms(g, channels, energy);
  double alpha = 0.0;
  for (std::size_t n = 0; n < t.size(); ++n) alpha = std::max(alpha, t[n] / c[n]);
  return alpha;
}

double surrogate_alpha_for_G(const ComplexMatrix& g, const ChannelSet& channels, std::span<const double> c,
                             const EnergyModel& energy) {
  check_residual(channels, c);
  double alpha = 0.0;
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const ComplexMatrix k = adjoint_times(g, channels[n]);
    const double lo = hermitian_eig(hermitian_part(times_adjoint(k, k))).eigenvalues.back();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    alpha = std::max(alpha, static_cast<double>(energy.payload_total) / (c[n] * lo));
  }
  return alpha;
}

ShortTermSolution gaussian_randomization(const ComplexMatrix& g_hat, const ChannelSet& channels,
                                         std::span<const double> c, const EnergyModel& energy,
                                         std::size_t num_trials, std::uint64_t seed) {
  if (num_trials < 1) throw DomainError("gaussian_randomization: num_trials must be >= 1");
  check_residual(channels, c);
  const std::size_t l = energy.payload_per_round;
  const std::size_t n_rx = g_hat.rows();
  if (l > n_rx) throw DimensionError("payload_per_round exceeds the receive antenna count");

  const HermitianEigenResult eg = hermitian_eig(g_hat);
  const ComplexMatrix root = matrix_sqrt_psd(g_hat);

  auto candidate = [&](std::size_t k) {
    ComplexMatrix g;
    if (k == 0) {
      g = eg.eigenvectors.columns(0, l);
      for (std::size_t j = 0; j < l; ++j) {
        const double s = std::sqrt(std::max(eg.eigenvalues[j], 0.0));
        for (std::size_t i = 0; i < n_rx; ++i) g(i, j) *= s;
      }
    } else {
      Rng rng(derive_seed(seed, k));
      g = root * complex_gaussian_matrix(n_rx, l, rng);
    }
    const double norm = frobenius_norm(g);
    if (norm > 0.0) g *= cplx(1.0 / norm, 0.0);
    return g;
  };

  const std::size_t total = num_trials + 1;
  std::vector<double> alphas(total, std::numeric_limits<double>::infinity());
  parallel_for(total, [&](std::size_t k) {
    const ComplexMatrix g = candidate(k);
    if (frobenius_norm(g) == 0.0) return;
    try {
      alphas[k] = alpha_for_G(g, channels, c, energy);
    } catch (const InfeasibleError&) {
      // Singular direction for some device: not a usable candidate.
    } catch (const DomainError&) {
    }
  });

  std::size_t best = total;
  for (std::size_t k = 0; k < total; ++k)
    if (std::isfinite(alphas[k]) && (best == total || alphas[k] < alphas[best])) best = k;
  if (best == total)
    throw RandomizationFailure("all " + std::to_string(total) +
                               " randomisation candidates were infeasible; raise the trial count");

  ShortTermSolution out;
  out.g = candidate(best);
  out.alpha = alphas[best];
  out.alpha_surrogate = surrogate_alpha_for_G(out.g, channels, c, energy);
  out.g_hat = g_hat;
  out.alpha_lb =
      static_cast<double>(energy.payload_total) / relaxed_objective(g_hat, channels, c, energy.payload_per_round);
  out.candidate = best;
  return out;
}

ShortTermResult solve_short_term(const ChannelSet& channels, std::span<const double> m,
                                 const EnergyModel& energy, const ShortTermOptions& options,
                                 std::uint64_t seed) {
  if (m.size() != channels.size()) throw DimensionError("assignment length != device count");
  if (energy.payload_per_round > channels.n_tx() || energy.payload_per_round > channels.n_rx())
    throw DimensionError("payload_per_round must not exceed the antenna counts (zero-forcing needs L <= n_tx)");
  ShortTermResult out;
  out.residual = residual_power(m, energy);
  const RelaxedSdpResult relaxed = solve_relaxed_sdp(channels, out.residual, energy, options.sdp);
  out.solution =
      gaussian_randomization(relaxed.g_hat, channels, out.residual, energy, options.rand_trials, derive_seed(seed, 1));
  out.solution.alpha_lb = relaxed.alpha_lb;
  out.design.a = out.solution.g * cplx(std::sqrt(out.solution.alpha), 0.0);
  out.design.b = zero_forcing_precoders(out.design.a, channels);
  return out;
}

std::vector<double> device_energies(const TransceiverDesign& design, std::span<const double> m,
                                    const EnergyModel& energy) {
  if (design.b.size() != m.size()) throw DimensionError("assignment length != precoder count");
  std::vector<double> out(m.size());
  for (std::size_t n = 0; n < m.size(); ++n)
    out[n] = energy.energy_coefficients[n] * m[n] * energy.weights_per_layer +
             precoder_energy(design.b[n], energy.payload_total);
  return out;
}

}  // namespace airtp
