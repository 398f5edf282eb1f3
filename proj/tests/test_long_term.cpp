#include <random>

#include "airtp/channel.hpp"
#include "airtp/long_term.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace airtp;

namespace {

double qp_objective(const SurrogateState& s, std::span<const double> m) {
  double v = s.f0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double d = m[j] - s.m[j];
    v += s.u0[j] * d + s.eta0 * d * d;
  }
  return v;
}

double row_value(const SurrogateState& s, const EnergyModel& em, std::size_t n, std::span<const double> m) {
  double v = s.f1[n] - em.power_budgets[n];
  double sq = 0.0;
  for (std::size_t j = 0; j < m.size(); ++j) {
    const double d = m[j] - s.m[j];
    v += s.u1(n, j) * d;
    sq += d * d;
  }
  return v + s.eta1 * sq;
}

// Quadratic-penalty projected gradient on the same program, with its own
// simplex projection and an increasing penalty weight.
std::vector<double> penalty_oracle(const SurrogateState& s, const EnergyModel& em) {
  const std::size_t n = s.m.size();
  std::vector<double> m(s.m);
  for (double mu : {1e2, 1e4, 1e6, 1e8}) {
    const double lip = 2.0 * s.eta0 + mu * 50.0;
    for (int it = 0; it < 20000; ++it) {
      std::vector<double> g(n);
      for (std::size_t j = 0; j < n; ++j) g[j] = s.u0[j] + 2.0 * s.eta0 * (m[j] - s.m[j]);
      for (std::size_t r = 0; r < n; ++r) {
        const double v = row_value(s, em, r, m);
        if (v <= 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) g[j] += 2.0 * mu * v * (s.u1(r, j) + 2.0 * s.eta1 * (m[j] - s.m[j]));
      }
      for (std::size_t j = 0; j < n; ++j) m[j] -= g[j] / lip;
      m = oracle::simplex_projection(m);
    }
  }
  return m;
}

std::vector<double> random_simplex_point(std::size_t n, std::mt19937_64& gen) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += (x = ex(gen));
  for (double& x : v) x /= s;
  return v;
}

SurrogateState random_state(std::size_t n, const EnergyModel& em, std::mt19937_64& gen, double tightness) {
  SurrogateState s = SurrogateState::initial(n);
  s.m = random_simplex_point(n, gen);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& u : s.u0) u = nd(gen);
  for (std::size_t j = 0; j < n; ++j) {
    s.u1(j, j) = em.energy_coefficients[j] * em.weights_per_layer;
    s.f1[j] = em.power_budgets[j] - tightness * std::abs(nd(gen));
  }
  s.f0 = 1.0;
  return s;
}

ChannelConfig small_channel(std::size_t n) {
  ChannelConfig c;
  c.n_devices = n;
  c.n_rx = 8;
  c.n_tx = 2;
  return c;
}

}  // namespace

TEST_CASE("step schedule: values in (0, 1], decreasing, gamma^0 = rho^0 = 1") {
  const StepSchedule s;
  CHECK(s.rho(0) == 1.0);
  CHECK(s.gamma(0) == 1.0);
  for (std::size_t t = 1; t < 1000; ++t) {
    REQUIRE(s.rho(t) < s.rho(t - 1));
    REQUIRE(s.gamma(t) < s.gamma(t - 1));
    REQUIRE(s.rho(t) > 0.0);
    REQUIRE(s.gamma(t) > 0.0);
  }
  StepSchedule bad;
  bad.rho_exponent = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("update_tracked_gradients: reset, freeze and fixed point") {
  SurrogateState s = SurrogateState::initial(2);
  s.u0 = {3.0, -1.0};
  const std::vector<double> g0{0.5, 0.25};
  RealMatrix g1{{1.0, 0.0}, {0.0, 2.0}};
  const SurrogateState reset = update_tracked_gradients(s, g0, g1, 1.0);
  CHECK(reset.u0 == g0);
  CHECK(reset.u1 == g1);
  const SurrogateState frozen = update_tracked_gradients(s, g0, g1, 0.0);
  CHECK(frozen.u0 == s.u0);

  // Constant samples from tau = 1 on: the tracked value converges to them.
  const StepSchedule sched;
  for (std::size_t t = 1; t <= 500; ++t) s = update_tracked_gradients(s, g0, g1, sched.rho(t));
  CHECK(std::abs(s.u0[0] - g0[0]) < 1e-6);
  CHECK(std::abs(s.u0[1] - g0[1]) < 1e-6);
}

TEST_CASE("sampled_objective: silent channel, scalar chain and MSE identity") {
  const ChannelSet one{{ComplexMatrix{{1.0}}}};
  const EnergyModel em = EnergyModel::uniform(1, 0.0, 1.0, 1.0, 1, 1);
  const std::vector<double> m{1.0};
  const ShortTermResult r = solve_short_term(one, m, em, ShortTermOptions{}, 1);
  CHECK(sampled_objective(r, 0.0) == 0.0);
  CHECK(sampled_objective(r, 1.0) == doctest::Approx(1.0).epsilon(1e-10));

  const ChannelSet h = sample_channels(small_channel(3), 2);
  const EnergyModel em3 = EnergyModel::uniform(3, 5e-4, 1000.0, 1.0, 4, 1);
  const std::vector<double> m3(3, 1.0 / 3.0);
  const ShortTermResult r3 = solve_short_term(h, m3, em3, ShortTermOptions{}, 1);
  CHECK(oracle::rel_diff(sampled_objective(r3, 1.0), mse_closed_form(r3.design, h, 1.0)) < 1e-8);
}

TEST_CASE("gradient_sample: zero energy cost and single-device calculus") {
  const ChannelSet h = sample_channels(small_channel(3), 3);
  const std::vector<double> m3(3, 1.0 / 3.0);
  const EnergyModel free = EnergyModel::uniform(3, 0.0, 1000.0, 1.0, 4, 1);
  const ShortTermResult r = solve_short_term(h, m3, free, ShortTermOptions{}, 1);
  for (double g : gradient_sample(m3, h, free, r, 1.0).g0) CHECK(g == 0.0);

  const ChannelSet h1 = sample_channels(small_channel(1), 4);
  const EnergyModel em1 = EnergyModel::uniform(1, 5e-4, 1000.0, 1.0, 4, 1);
  const std::vector<double> m1{1.0};
  const ShortTermResult r1 = solve_short_term(h1, m1, em1, ShortTermOptions{}, 1);
  const double c = 1.0 - 0.5;
  const double t = r1.solution.alpha * c;  // alpha = t / c with one device
  const GradientSample gs = gradient_sample(m1, h1, em1, r1, 2.0);
  CHECK(gs.g0[0] == doctest::Approx(2.0 * t * 5e-4 * 1000.0 / (c * c)).epsilon(1e-10));
  CHECK(gs.g1(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("gradient_sample: central finite differences with G frozen") {
  std::mt19937_64 gen(51);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 2 + inst % 4;
    const ChannelSet h = sample_channels(small_channel(n), 100 + inst);
    std::vector<double> e(n);
    std::uniform_real_distribution<double> ud(1e-4, 6e-4);
    for (double& x : e) x = ud(gen);
    EnergyModel em = EnergyModel::uniform(n, 0.0, 1000.0, 1.0, 4, inst % 2 ? 1 : 2);
    em.energy_coefficients = e;
    const std::vector<double> m = random_simplex_point(n, gen);
    const ShortTermResult r = solve_short_term(h, m, em, ShortTermOptions{}, inst);
    const GradientSample gs = gradient_sample(m, h, em, r, 1.0);

    // f0(m) = sigma^2 alpha(G; c(m)) with c_n = P_n - e_n m_n s_tot.
    auto f0 = [&](const std::vector<double>& mm) {
      std::vector<double> c(n);
      for (std::size_t j = 0; j < n; ++j) c[j] = 1.0 - e[j] * mm[j] * 1000.0;
      return alpha_for_G(r.solution.g, h, c, em);
    };
    // The binding device must not change inside the difference stencil: a
    // step of c_n moves the ratios t_n / c_n by about e s_tot h / c_n, so
    // the step is kept well below the top-two relative gap.
    std::vector<double> ratio(n);
    const std::vector<double> t = device_scale_terms(r.solution.g, h, em);
    for (std::size_t j = 0; j < n; ++j) ratio[j] = t[j] / (1.0 - e[j] * m[j] * 1000.0);
    std::sort(ratio.rbegin(), ratio.rend());
    const double gap = (ratio[0] - ratio[1]) / ratio[0];
    const double step = std::clamp(0.05 * gap, 1e-10, 1e-6);
    double err = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> up(m), down(m);
      up[k] += step;
      down[k] -= step;
      const double fd = (f0(up) - f0(down)) / (2.0 * step);
      err += (fd - gs.g0[k]) * (fd - gs.g0[k]);
      norm += gs.g0[k] * gs.g0[k];
    }
    INFO("instance " << inst << " gap " << gap);
    CHECK(std::sqrt(err) <= 1e-3 * std::sqrt(norm));
  }
}

TEST_CASE("solve_surrogate_qp: stationary and symmetric states") {
  const EnergyModel em = EnergyModel::uniform(3, 1e-4, 1000.0, 1.0, 4, 1);
  SurrogateState s = SurrogateState::initial(3);
  s.m = {0.2, 0.3, 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    s.u1(j, j) = 0.1;
    s.f1[j] = 0.5;
  }
  const SurrogateQpResult still = solve_surrogate_qp(s, em);
  for (std::size_t j = 0; j < 3; ++j) CHECK(still.m[j] == doctest::Approx(s.m[j]).epsilon(1e-9));

  const EnergyModel em2 = EnergyModel::uniform(2, 1e-4, 1000.0, 1.0, 4, 1);
  SurrogateState sym = SurrogateState::initial(2);
  sym.u0 = {0.7, 0.7};
  sym.u1 = RealMatrix{{0.1, 0.0}, {0.0, 0.1}};
  sym.f1 = {0.9, 0.9};
  const SurrogateQpResult r = solve_surrogate_qp(sym, em2);
  CHECK(r.m[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(r.m[1] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("solve_surrogate_qp: inactive rows reduce to a simplex projection") {
  std::mt19937_64 gen(52);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 6;
    const EnergyModel em = EnergyModel::uniform(n, 1e-5, 1000.0, 1.0, 4, 1);
    SurrogateState s = random_state(n, em, gen, 0.0);
    for (double& f : s.f1) f = 0.1;
    std::vector<double> target(n);
    for (std::size_t j = 0; j < n; ++j) target[j] = s.m[j] - s.u0[j] / (2.0 * s.eta0);
    const std::vector<double> want = oracle::simplex_projection(target);
    const SurrogateQpResult r = solve_surrogate_qp(s, em);
    CHECK(r.feasible);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(r.m[j] - want[j]) < 1e-9);
  }
}

TEST_CASE("solve_surrogate_qp: KKT residual and an independent penalty solve") {
  std::mt19937_64 gen(53);
  std::size_t active_cases = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 2 + trial % 4;
    EnergyModel em = EnergyModel::uniform(n, 6e-4, 1000.0, 1.0, 4, 1);
    const SurrogateState s = random_state(n, em, gen, 0.05);
    const SurrogateQpResult r = solve_surrogate_qp(s, em);
    if (!r.feasible) continue;
    bool active = false;
    for (std::size_t k = 0; k < n; ++k) {
      const double row = row_value(s, em, k, r.m);
      CHECK(row <= 1e-9);
      CHECK(std::abs(surrogate_row(s, em, k, r.m) - row) < 1e-12);
      if (row > -1e-7) active = true;
    }
    active_cases += active ? 1 : 0;
    CHECK(surrogate_kkt_residual(s, em, r.m, r.multipliers) < 1e-8);
    CHECK(qp_objective(s, r.m) <= qp_objective(s, s.m) + 1e-10);

    const std::vector<double> ref = penalty_oracle(s, em);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(r.m[j] - ref[j]) < 1e-4);

    // No sampled feasible point does better.
    for (int k = 0; k < 2000; ++k) {
      const std::vector<double> p = random_simplex_point(n, gen);
      bool feasible = true;
      for (std::size_t row = 0; row < n && feasible; ++row) feasible = row_value(s, em, row, p) <= 0.0;
      if (feasible) REQUIRE(qp_objective(s, p) >= qp_objective(s, r.m) - 1e-12);
    }
  }
  CHECK(active_cases > 0);
}

TEST_CASE("solve_surrogate_qp: infeasible rows are flagged") {
  const EnergyModel em = EnergyModel::uniform(2, 1e-4, 1000.0, 1.0, 4, 1);
  SurrogateState s = SurrogateState::initial(2);
  s.f1 = {1.5, 1.5};
  s.u1 = RealMatrix{{0.1, 0.0}, {0.0, 0.1}};
  const SurrogateQpResult r = solve_surrogate_qp(s, em);
  CHECK_FALSE(r.feasible);
  CHECK(std::abs(r.m[0] + r.m[1] - 1.0) < 1e-12);
}

TEST_CASE("sca_step: a single device never moves") {
  const ChannelSet h = sample_channels(small_channel(1), 1);
  const EnergyModel em = EnergyModel::uniform(1, 5e-4, 1000.0, 1.0, 4, 1);
  SurrogateState s = SurrogateState::initial(1);
  for (int k = 0; k < 5; ++k) {
    s = sca_step(s, h, em, 1.0, LongTermOptions{}, k).state;
    CHECK(s.m == std::vector<double>{1.0});
  }
  CHECK(s.tau == 5);
}

TEST_CASE("run_long_term: simplex iterates, one-step form and cost ordering") {
  ChannelConfig ch = small_channel(4);
  const EnergyModel em = EnergyModel::uniform(4, 5e-4, 1000.0, 1.0, 4, 1);
  LongTermOptions opt;
  opt.max_iters = 40;
  const LongTermResult r = run_long_term(ch, em, opt, 3);
  for (const auto& row : r.trace) {
    double sum = 0.0;
    for (double v : row.m) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-10);
  }

  // max_iters = 1 returns m^1, the point a longer run visits second.
  opt.max_iters = 1;
  const LongTermResult one = run_long_term(ch, em, opt, 3);
  opt.max_iters = 2;
  const LongTermResult two_steps = run_long_term(ch, em, opt, 3);
  CHECK(one.trace.size() == 1);
  REQUIRE(two_steps.trace.size() == 2);
  CHECK(one.m == two_steps.trace[1].m);
  CHECK(one.trace[0].step_gamma == 1.0);

  // The cheaper device carries more of the model.
  ChannelConfig two = small_channel(2);
  EnergyModel cost = EnergyModel::uniform(2, 0.0, 1000.0, 1.0, 4, 1);
  cost.energy_coefficients = {5e-5, 5e-4};
  opt.max_iters = 60;
  const LongTermResult skew = run_long_term(two, cost, opt, 8);
  CHECK(skew.m[0] > skew.m[1]);
}

TEST_CASE("run_long_term: deterministic channel gives a non-increasing objective") {
  ChannelConfig ch = small_channel(3);
  ch.variance = 1e-14;
  ch.rician_mean = cplx(1.0, 0.5);
  EnergyModel em = EnergyModel::uniform(3, 0.0, 1000.0, 1.0, 4, 1);
  em.energy_coefficients = {1e-4, 3e-4, 5e-4};
  LongTermOptions opt;
  opt.max_iters = 60;
  const LongTermResult r = run_long_term(ch, em, opt, 2);
  for (std::size_t k = 11; k < r.trace.size(); ++k)
    CHECK(r.trace[k].sampled_mse <= r.trace[k - 1].sampled_mse + 1e-9);
}

TEST_CASE("run_long_term: rejects a hopeless energy model") {
  ChannelConfig ch = small_channel(2);
  const EnergyModel em = EnergyModel::uniform(2, 3e-3, 1000.0, 1.0, 4, 1);
  LongTermOptions opt;
  opt.max_iters = 5;
  CHECK_THROWS_AS(run_long_term(ch, em, opt, 1), InfeasibleError);
}
