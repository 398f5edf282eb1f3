#pragma once

// Stochastic successive convex approximation over the model-assignment
// simplex. Each iteration draws a channel sample, solves the short-term
// problem at the current assignment, folds the sampled gradients into
// recursively averaged ones and moves toward the minimiser of a strongly
// convex quadratic surrogate.

#include <cstdint>
#include <span>
#include <vector>

#include "airtp/channel.hpp"
#include "airtp/matrix.hpp"
#include "airtp/short_term.hpp"

namespace airtp {

/// rho(tau) = (1 + tau)^-rho_exponent, gamma(tau) = (1 + tau)^-gamma_exponent.
/// Exponents in (0.5, 1] give sum = inf and sum of squares < inf.
struct StepSchedule {
  double rho_exponent = 0.6;
  double gamma_exponent = 0.8;

  double rho(std::size_t tau) const;
  double gamma(std::size_t tau) const;
  void validate() const;
};

struct SurrogateState {
  std::size_t tau = 0;
  std::vector<double> m;     // m^tau
  std::vector<double> u0;    // tracked gradient of the sampled MSE
  RealMatrix u1;             // tracked Jacobian of the per-device energy, N x N
  double eta0 = 1.0;
  double eta1 = 1.0;
  double f0 = 0.0;           // sampled MSE at m^tau
  std::vector<double> f1;    // per-device energy at m^tau

  /// Uniform assignment, zero tracked gradients.
  static SurrogateState initial(std::size_t n_devices, double eta0 = 1.0, double eta1 = 1.0);
};

struct GradientSample {
  std::vector<double> g0;  // d f0 / d m
  RealMatrix g1;           // row n: d(energy of device n) / d m
  std::size_t binding = 0; // device attaining alpha
  bool tie = false;        // runner-up within 1e-9 relative of the binding device
};

/// noise_power * alpha of the design, the per-sample stand-in for E[MSE].
double sampled_objective(const ShortTermResult& result, double noise_power);

/// Gradients with the beamformer direction G held at the short-term solution
/// while alpha follows m through c(m). The energy Jacobian holds the design
/// fixed, leaving diag(e s_tot).
GradientSample gradient_sample(std::span<const double> m, const ChannelSet& channels, const EnergyModel& energy,
                               const ShortTermResult& result, double noise_power);

/// u_i <- (1 - rho) u_i + rho sample_i.
SurrogateState update_tracked_gradients(SurrogateState state, std::span<const double> g0, const RealMatrix& g1,
                                        double rho);

struct SurrogateQpResult {
  std::vector<double> m;
  std::vector<double> multipliers;  // power rows
  bool feasible = true;             // false: minimiser of the worst row violation instead
  double kkt_residual = 0.0;
};

/// Minimises u0.(m - m^tau) + eta0 |m - m^tau|^2 over the simplex subject to
///   f1_n + u1_n.(m - m^tau) + eta1 |m - m^tau|^2 <= P_n  for every device.
/// When no point satisfies every row strictly, returns the minimiser of the
/// largest row violation and clears `feasible`.
SurrogateQpResult solve_surrogate_qp(const SurrogateState& state, const EnergyModel& energy);

/// Slack-signed value of surrogate power row n at m: row minus P_n, <= 0 when met.
double surrogate_row(const SurrogateState& state, const EnergyModel& energy, std::size_t n, std::span<const double> m);

/// max of: simplex-projected Lagrangian gradient, row violation, |lambda_n row_n|,
/// negative multipliers. Zero exactly at a KKT point.
double surrogate_kkt_residual(const SurrogateState& state, const EnergyModel& energy, std::span<const double> m,
                              std::span<const double> multipliers);

struct LongTermOptions {
  StepSchedule schedule;
  double eta0 = 1.0;
  double eta1 = 1.0;
  std::size_t max_iters = 200;
  std::size_t window = 20;        // consecutive small moves before stopping
  double move_tolerance = 1e-5;   // on |m^{tau+1} - m^tau|_inf
  std::size_t max_skipped = 50;   // infeasible samples tolerated in a row
  ShortTermOptions short_term;
};

struct ScaStepOutcome {
  SurrogateState state;
  bool skipped = false;       // sample was infeasible, tau not advanced
  bool qp_feasible = true;
  bool tie_perturbed = false;
  double step = 0.0;          // |m^{tau+1} - m^tau|_inf
};

/// One iteration on a given channel sample. `seed` drives the short-term
/// randomisation and any tie perturbation.
ScaStepOutcome sca_step(const SurrogateState& state, const ChannelSet& channels, const EnergyModel& energy,
                        double noise_power, const LongTermOptions& options, std::uint64_t seed);

struct LongTermTraceRow {
  std::size_t tau = 0;
  std::vector<double> m;  // m^tau, the point the sample was taken at
  double sampled_mse = 0.0;
  double u0_norm = 0.0;
  double step_gamma = 0.0;
  bool qp_feasible = true;
};

struct LongTermResult {
  std::vector<double> m;
  std::vector<LongTermTraceRow> trace;
  std::size_t skipped_samples = 0;
  bool converged = false;
};

/// Iterates sca_step over fresh channel samples (sample k uses
/// derive_seed(seed, k)) from the uniform assignment. Throws InfeasibleError
/// when max_skipped samples in a row, or every sample, are infeasible.
LongTermResult run_long_term(const ChannelConfig& channel, const EnergyModel& energy, const LongTermOptions& options,
                             std::uint64_t seed);

}  // namespace airtp
