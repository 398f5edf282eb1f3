#include "airtp/long_term.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

#include "airtp/linalg.hpp"
#include "airtp/rng.hpp"

namespace airtp {

namespace {

// Stream index for per-step randomness under a sample seed. Kept well away
// from the small indices sample_channels uses for devices.
constexpr std::uint64_t kStepStream = 0x5ca1ab1eULL << 20;

void check_state(const SurrogateState& s) {
  const std::size_t n = s.m.size();
  if (n == 0) throw DimensionError("surrogate state has no devices");
  if (s.u0.size() != n || s.u1.rows() != n || s.u1.cols() != n || s.f1.size() != n)
    throw DimensionError("surrogate state fields disagree on the device count");
  if (!(s.eta0 > 0.0) || !(s.eta1 > 0.0)) throw DomainError("surrogate curvature eta must be > 0");
}

// Damped Newton for the surrogate program in barrier form. Variables are m
// (and, in phase one, a bound s on every row); sum m = 1 is kept exactly by
// eliminating it from each Newton system.
class QpBarrier {
 public:
  QpBarrier(const SurrogateState& st, const EnergyModel& en) : st_(st), en_(en), n_(st.m.size()) {}

  double row(std::size_t k, std::span<const double> m) const {
    double lin = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double d = m[j] - st_.m[j];
      lin += st_.u1(k, j) * d;
      sq += d * d;
    }
    return st_.f1[k] - en_.power_budgets[k] + lin + st_.eta1 * sq;
  }

  // Phase one: minimise s subject to row_k(m) <= s. Stops as soon as s < 0.
  // Returns the best s reached.
  double phase_one(std::vector<double>& m, double& t_final) {
    std::vector<double> x(m);
    double s = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_; ++k) s = std::max(s, row(k, m));
    x.push_back(s + 1.0 + std::abs(s));
    double t = 1.0;
    while (true) {
      centre(x, t, true);
      if (x.back() < 0.0 || 2.0 * static_cast<double>(n_) / t < 1e-13 * scale()) break;
      t *= 10.0;
    }
    t_final = t;
    m.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n_));
    return x.back();
  }

  // Phase two from a strictly feasible m.
  void phase_two(std::vector<double>& m, double& t_final) {
    double t = 1.0;
    while (true) {
      centre(m, t, false);
      if (2.0 * static_cast<double>(n_) / t < 1e-13 * scale()) break;
      t *= 10.0;
    }
    t_final = t;
  }

 private:
  double scale() const {
    double s = 1.0;
    for (std::size_t k = 0; k < n_; ++k) s = std::max(s, std::abs(en_.power_budgets[k]));
    for (double v : st_.u0) s = std::max(s, std::abs(v));
    return s;
  }

  // Row slacks h_k > 0 and m_j > 0, or nullopt outside the domain.
  std::optional<std::vector<double>> slacks(const std::vector<double>& x, bool phase1) const {
    std::span<const double> m(x.data(), n_);
    std::vector<double> h(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      h[k] = (phase1 ? x.back() : 0.0) - row(k, m);
      if (!(h[k] > 0.0)) return std::nullopt;
    }
    for (std::size_t j = 0; j < n_; ++j)
      if (!(m[j] > 0.0)) return std::nullopt;
    return h;
  }

  void centre(std::vector<double>& x, double t, bool phase1) const {
    const std::size_t dim = x.size();
    std::vector<double> a(dim, 0.0);
    for (std::size_t j = 0; j < n_; ++j) a[j] = 1.0;
    for (int iter = 0; iter < 200; ++iter) {
      const std::vector<double> h = *slacks(x, phase1);
      std::vector<double> g(dim, 0.0);
      RealMatrix hess(dim, dim);
      if (phase1) {
        g.back() = t;
      } else {
        for (std::size_t j = 0; j < n_; ++j) {
          g[j] = t * (st_.u0[j] + 2.0 * st_.eta0 * (x[j] - st_.m[j]));
          hess(j, j) = 2.0 * t * st_.eta0;
        }
      }
      std::vector<double> dh(dim);
      for (std::size_t k = 0; k < n_; ++k) {
        // -log h_k with h_k = [s] - row_k(m).
        for (std::size_t j = 0; j < n_; ++j) dh[j] = -(st_.u1(k, j) + 2.0 * st_.eta1 * (x[j] - st_.m[j]));
        if (phase1) dh.back() = 1.0;
        for (std::size_t i = 0; i < dim; ++i) {
          g[i] -= dh[i] / h[k];
          for (std::size_t j = 0; j < dim; ++j) hess(i, j) += dh[i] * dh[j] / (h[k] * h[k]);
        }
        for (std::size_t j = 0; j < n_; ++j) hess(j, j) += 2.0 * st_.eta1 / h[k];
      }
      for (std::size_t j = 0; j < n_; ++j) {
        g[j] -= 1.0 / x[j];
        hess(j, j) += 1.0 / (x[j] * x[j]);
      }

      std::vector<double> d(dim);
      for (std::size_t i = 0; i < dim; ++i) d[i] = hess(i, i) > 0.0 ? 1.0 / std::sqrt(hess(i, i)) : 1.0;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < dim; ++j) hess(i, j) *= d[i] * d[j];
      auto l = cholesky(hess);
      for (double ridge = 1e-14; !l && ridge < 1e-2; ridge *= 100.0) {
        RealMatrix hr = hess;
        for (std::size_t i = 0; i < dim; ++i) hr(i, i) += ridge;
        l = cholesky(hr);
      }
      if (!l) return;
      std::vector<double> gs(dim), as(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        gs[i] = d[i] * g[i];
        as[i] = d[i] * a[i];
      }
      const std::vector<double> v1 = cholesky_solve<double>(*l, gs);
      const std::vector<double> v2 = cholesky_solve<double>(*l, as);
      const double w = -std::inner_product(as.begin(), as.end(), v1.begin(), 0.0) /
                       std::inner_product(as.begin(), as.end(), v2.begin(), 0.0);
      std::vector<double> dx(dim);
      for (std::size_t i = 0; i < dim; ++i) dx[i] = d[i] * (-v1[i] - w * v2[i]);
      const double decrement = -std::inner_product(g.begin(), g.end(), dx.begin(), 0.0);
      if (!(decrement > 1e-14)) return;

      const double lambda = std::sqrt(decrement);
      double step = lambda < 0.25 ? 1.0 : 1.0 / (1.0 + lambda);
      std::vector<double> trial(dim);
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
        for (std::size_t i = 0; i < dim; ++i) trial[i] = x[i] + step * dx[i];
        if (slacks(trial, phase1)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) return;
      x = trial;
      if (phase1 && x.back() < 0.0) return;
      if (decrement <= 1e-12) return;
    }
  }

  const SurrogateState& st_;
  const EnergyModel& en_;
  std::size_t n_;
};

// Newton on the KKT equations of the active set read off a barrier point:
// rows with multiplier above their slack are held at zero, coordinates with
// bound multiplier 1/(t m_j) above m_j are pinned to zero. Converges to
// machine precision where the barrier alone is limited by cancellation in
// the row values.
struct KktPoint {
  std::vector<double> m;
  std::vector<double> multipliers;
};

std::optional<KktPoint> polish_active_set(const SurrogateState& st, const QpBarrier& qp, const KktPoint& start,
                                          double t) {
  const std::size_t n = st.m.size();
  std::vector<std::size_t> free_vars, rows;
  for (std::size_t j = 0; j < n; ++j)
    if (1.0 / (t * start.m[j]) <= start.m[j]) free_vars.push_back(j);
  for (std::size_t k = 0; k < n; ++k)
    if (start.multipliers[k] > -qp.row(k, start.m)) rows.push_back(k);
  if (free_vars.empty()) return std::nullopt;

  const std::size_t nf = free_vars.size(), na = rows.size(), dim = nf + na + 1;
  KktPoint p;
  p.m.assign(n, 0.0);
  double total = 0.0;
  for (std::size_t j : free_vars) total += start.m[j];
  for (std::size_t j : free_vars) p.m[j] = start.m[j] / total;
  p.multipliers.assign(n, 0.0);
  for (std::size_t k : rows) p.multipliers[k] = start.multipliers[k];
  double nu = 0.0;
  {
    // Start nu at the mean stationarity residual of the free coordinates.
    for (std::size_t j : free_vars) {
      const double d = p.m[j] - st.m[j];
      double g = st.u0[j] + 2.0 * st.eta0 * d;
      for (std::size_t k : rows) g += p.multipliers[k] * (st.u1(k, j) + 2.0 * st.eta1 * d);
      nu -= g / static_cast<double>(nf);
    }
  }

  for (int iter = 0; iter < 50; ++iter) {
    double lam_sum = 0.0;
    for (std::size_t k : rows) lam_sum += p.multipliers[k];
    RealMatrix jac(dim, dim);
    std::vector<double> res(dim, 0.0);
    for (std::size_t a = 0; a < nf; ++a) {
      const std::size_t j = free_vars[a];
      const double d = p.m[j] - st.m[j];
      res[a] = st.u0[j] + 2.0 * st.eta0 * d + nu;
      jac(a, a) = 2.0 * st.eta0 + 2.0 * st.eta1 * lam_sum;
      for (std::size_t b = 0; b < na; ++b) {
        const std::size_t k = rows[b];
        const double grad_kj = st.u1(k, j) + 2.0 * st.eta1 * d;
        res[a] += p.multipliers[k] * grad_kj;
        jac(a, nf + b) = grad_kj;
        jac(nf + b, a) = grad_kj;
      }
      jac(a, dim - 1) = 1.0;
      jac(dim - 1, a) = 1.0;
      res[dim - 1] += p.m[j];
    }
    res[dim - 1] -= 1.0;
    for (std::size_t b = 0; b < na; ++b) res[nf + b] = qp.row(rows[b], p.m);
    double norm = 0.0;
    for (double v : res) norm = std::max(norm, std::abs(v));
    if (norm < 1e-15) break;
    for (double& v : res) v = -v;
    const auto step = lu_solve(jac, res);
    if (!step) return std::nullopt;
    for (std::size_t a = 0; a < nf; ++a) p.m[free_vars[a]] += (*step)[a];
    for (std::size_t b = 0; b < na; ++b) p.multipliers[rows[b]] += (*step)[nf + b];
    nu += (*step)[dim - 1];
  }
  for (double v : p.m)
    if (!(v >= 0.0)) return std::nullopt;
  for (double v : p.multipliers)
    if (!(v >= 0.0)) return std::nullopt;
  return p;
}

std::vector<double> clean_simplex(std::vector<double> m) {
  double total = 0.0;
  for (double& v : m) {
    v = std::max(v, 0.0);
    total += v;
  }
  for (double& v : m) v /= total;
  return m;
}

}  // namespace

double StepSchedule::rho(std::size_t tau) const {
  return std::pow(1.0 + static_cast<double>(tau), -rho_exponent);
}

double StepSchedule::gamma(std::size_t tau) const {
  return std::pow(1.0 + static_cast<double>(tau), -gamma_exponent);
}

void StepSchedule::validate() const {
  if (!(rho_exponent > 0.5 && rho_exponent <= 1.0)) throw ConfigError("long_term.rho_exponent must be in (0.5, 1]");
  if (!(gamma_exponent > 0.5 && gamma_exponent <= 1.0))
    throw ConfigError("long_term.gamma_exponent must be in (0.5, 1]");
}

SurrogateState SurrogateState::initial(std::size_t n_devices, double eta0, double eta1) {
  if (n_devices == 0) throw DimensionError("surrogate state needs at least one device");
  SurrogateState s;
  s.m.assign(n_devices, 1.0 / static_cast<double>(n_devices));
  s.u0.assign(n_devices, 0.0);
  s.u1 = RealMatrix(n_devices, n_devices);
  s.f1.assign(n_devices, 0.0);
  s.eta0 = eta0;
  s.eta1 = eta1;
  check_state(s);
  return s;
}

double sampled_objective(const ShortTermResult& result, double noise_power) {
  return noise_power * result.solution.alpha;
}

GradientSample gradient_sample(std::span<const double> m, const ChannelSet& channels, const EnergyModel& energy,
                               const ShortTermResult& result, double noise_power) {
  const std::size_t n_dev = channels.size();
  const std::vector<double> c = residual_power(m, energy);
  const std::vector<double> t = device_scale_terms(result.solution.g, channels, energy);
  const double s_tot = energy.weights_per_layer;

  std::size_t best = 0;
  for (std::size_t n = 1; n < n_dev; ++n)
    if (t[n] / c[n] > t[best] / c[best]) best = n;
  const double top = t[best] / c[best];

  GradientSample out;
  out.binding = best;
  for (std::size_t n = 0; n < n_dev; ++n)
    if (n != best && t[n] / c[n] >= top * (1.0 - 1e-9)) out.tie = true;
  out.g0.assign(n_dev, 0.0);
  out.g0[best] = noise_power * t[best] * energy.energy_coefficients[best] * s_tot / (c[best] * c[best]);
  out.g1 = RealMatrix(n_dev, n_dev);
  for (std::size_t n = 0; n < n_dev; ++n) out.g1(n, n) = energy.energy_coefficients[n] * s_tot;
  return out;
}

SurrogateState update_tracked_gradients(SurrogateState state, std::span<const double> g0, const RealMatrix& g1,
                                        double rho) {
  check_state(state);
  const std::size_t n = state.m.size();
  if (g0.size() != n || g1.rows() != n || g1.cols() != n) throw DimensionError("gradient sample size mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("rho must be in [0, 1]");
  if (rho == 1.0) {
    state.u0.assign(g0.begin(), g0.end());
    state.u1 = g1;
    return state;
  }
  for (std::size_t i = 0; i < n; ++i) state.u0[i] = (1.0 - rho) * state.u0[i] + rho * g0[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) state.u1(i, j) = (1.0 - rho) * state.u1(i, j) + rho * g1(i, j);
  return state;
}

double surrogate_row(const SurrogateState& state, const EnergyModel& energy, std::size_t n,
                     std::span<const double> m) {
  return QpBarrier(state, energy).row(n, m);
}

double surrogate_kkt_residual(const SurrogateState& state, const EnergyModel& energy, std::span<const double> m,
                              std::span<const double> multipliers) {
  check_state(state);
  const std::size_t n = state.m.size();
  if (m.size() != n || multipliers.size() != n) throw DimensionError("KKT check size mismatch");
  const QpBarrier qp(state, energy);
  std::vector<double> grad(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double d = m[j] - state.m[j];
    grad[j] = state.u0[j] + 2.0 * state.eta0 * d;
    for (std::size_t k = 0; k < n; ++k) grad[j] += multipliers[k] * (state.u1(k, j) + 2.0 * state.eta1 * d);
  }
  std::vector<double> moved(n);
  for (std::size_t j = 0; j < n; ++j) moved[j] = m[j] - grad[j];
  const std::vector<double> proj = simplex_projection(moved);
  double r = 0.0;
  for (std::size_t j = 0; j < n; ++j) r = std::max(r, std::abs(m[j] - proj[j]));
  for (std::size_t k = 0; k < n; ++k) {
    const double g = qp.row(k, m);
    r = std::max({r, g, std::abs(multipliers[k] * g), -multipliers[k]});
  }
  return r;
}

SurrogateQpResult solve_surrogate_qp(const SurrogateState& state, const EnergyModel& energy) {
  check_state(state);
  energy.validate(state.m.size());
  const std::size_t n = state.m.size();
  SurrogateQpResult out;
  out.multipliers.assign(n, 0.0);
  QpBarrier qp(state, energy);
  if (n == 1) {
    out.m = {1.0};
    out.feasible = qp.row(0, out.m) <= 1e-12 * std::max(1.0, std::abs(energy.power_budgets[0]));
    return out;
  }

  // Pull the start off the simplex boundary so the barrier is finite.
  std::vector<double> m(n);
  for (std::size_t j = 0; j < n; ++j) m[j] = (1.0 - 1e-3) * state.m[j] + 1e-3 / static_cast<double>(n);

  double t = 1.0;
  const double worst = qp.phase_one(m, t);
  if (!(worst < 0.0)) {
    double tol = 1.0;
    for (double p : energy.power_budgets) tol = std::max(tol, std::abs(p));
    // No strictly feasible point; when the bound is ~0 the feasible set is
    // a lower-dimensional sliver (e.g. a row with no linear term) and the
    // phase-one point lies on it.
    out.feasible = worst <= 1e-10 * tol;
    out.m = clean_simplex(m);
    return out;
  }
  qp.phase_two(m, t);
  out.m = clean_simplex(m);
  for (std::size_t k = 0; k < n; ++k) out.multipliers[k] = 1.0 / (t * std::max(-qp.row(k, m), 1e-300));
  out.kkt_residual = surrogate_kkt_residual(state, energy, out.m, out.multipliers);
  if (const auto p = polish_active_set(state, qp, {m, out.multipliers}, t)) {
    const double r = surrogate_kkt_residual(state, energy, p->m, p->multipliers);
    if (r < out.kkt_residual) {
      out.m = p->m;
      out.multipliers = p->multipliers;
      out.kkt_residual = r;
    }
  }
  return out;
}

ScaStepOutcome sca_step(const SurrogateState& state, const ChannelSet& channels, const EnergyModel& energy,
                        double noise_power, const LongTermOptions& options, std::uint64_t seed) {
  check_state(state);
  if (channels.size() != state.m.size()) throw DimensionError("channel sample size != device count");
  ScaStepOutcome out;
  out.state = state;

  ShortTermResult st;
  try {
    st = solve_short_term(channels, state.m, energy, options.short_term, seed);
  } catch (const InfeasibleError&) {
    out.skipped = true;
    return out;
  }

  GradientSample gs = gradient_sample(state.m, channels, energy, st, noise_power);
  if (gs.tie) {
    // Non-differentiable point of max_n t_n / c_n: evaluate the envelope
    // gradient at a nearby assignment instead.
    Rng rng(derive_seed(seed, kStepStream));
    std::vector<double> v(state.m.size());
    for (double& x : v) x = rng.normal();
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double big = 0.0;
    for (double& x : v) big = std::max(big, std::abs(x -= mean));
    std::vector<double> moved(state.m);
    for (std::size_t j = 0; j < moved.size(); ++j) moved[j] += 1e-8 * v[j] / std::max(big, 1e-300);
    moved = simplex_projection(moved);
    try {
      gs = gradient_sample(moved, channels, energy, st, noise_power);
      out.tie_perturbed = true;
    } catch (const InfeasibleError&) {
      // Perturbation left the feasible set; keep the one-sided gradient.
    }
  }

  SurrogateState next = update_tracked_gradients(state, gs.g0, gs.g1, options.schedule.rho(state.tau));
  next.f0 = sampled_objective(st, noise_power);
  next.f1 = device_energies(st.design, state.m, energy);

  const SurrogateQpResult qp = solve_surrogate_qp(next, energy);
  out.qp_feasible = qp.feasible;
  const double gamma = options.schedule.gamma(state.tau);
  std::vector<double> m(state.m.size());
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = (1.0 - gamma) * state.m[j] + gamma * qp.m[j];
  m = clean_simplex(std::move(m));
  for (std::size_t j = 0; j < m.size(); ++j) out.step = std::max(out.step, std::abs(m[j] - state.m[j]));
  next.m = std::move(m);
  ++next.tau;
  out.state = std::move(next);
  return out;
}

LongTermResult run_long_term(const ChannelConfig& channel, const EnergyModel& energy, const LongTermOptions& options,
                             std::uint64_t seed) {
  channel.validate();
  energy.validate(channel.n_devices);
  options.schedule.validate();
  if (options.max_iters < 1) throw ConfigError("long_term.max_iters must be >= 1");

  LongTermResult out;
  SurrogateState state = SurrogateState::initial(channel.n_devices, options.eta0, options.eta1);
  std::size_t sample = 0;
  std::size_t skipped_in_row = 0;
  std::size_t small_moves = 0;
  while (state.tau < options.max_iters) {
    const std::uint64_t sample_seed = derive_seed(seed, sample++);
    const ChannelSet channels = sample_channels(channel, sample_seed);
    ScaStepOutcome step =
        sca_step(state, channels, energy, channel.noise_power, options, derive_seed(sample_seed, kStepStream));
    if (step.skipped) {
      ++out.skipped_samples;
      if (++skipped_in_row >= options.max_skipped)
        throw InfeasibleError(std::to_string(skipped_in_row) +
                              " consecutive channel samples were infeasible at assignment step " +
                              std::to_string(state.tau));
      continue;
    }
    skipped_in_row = 0;

    LongTermTraceRow row;
    row.tau = state.tau;
    row.m = state.m;
    row.sampled_mse = step.state.f0;
    row.u0_norm = std::sqrt(std::inner_product(step.state.u0.begin(), step.state.u0.end(), step.state.u0.begin(), 0.0));
    row.step_gamma = options.schedule.gamma(state.tau);
    row.qp_feasible = step.qp_feasible;
    out.trace.push_back(std::move(row));

    state = std::move(step.state);
    small_moves = step.step < options.move_tolerance ? small_moves + 1 : 0;
    if (small_moves >= options.window) {
      out.converged = true;
      break;
    }
  }
  out.m = state.m;
  return out;
}

}  // namespace airtp
