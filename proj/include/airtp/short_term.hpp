#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "airtp/aircomp.hpp"
#include "airtp/channel.hpp"
#include "airtp/matrix.hpp"

namespace airtp {

/// Per-device compute-plus-transmit energy budget.
struct EnergyModel {
  std::vector<double> energy_coefficients;  // e_n, energy per weight
  double weights_per_layer = 1.0;           // s_tot
  std::vector<double> power_budgets;        // P_n^max
  std::size_t payload_total = 4;            // L_0, symbols per all-reduce
  std::size_t payload_per_round = 1;        // L, symbols per transmission round

  std::size_t size() const { return power_budgets.size(); }
  /// Throws ConfigError on an invalid field or a size other than n_devices.
  void validate(std::size_t n_devices) const;
  /// Uniform model: the same e, P for every device.
  static EnergyModel uniform(std::size_t n_devices, double e, double s_tot, double p_max, std::size_t l0,
                             std::size_t l);
};

struct SdpOptions {
  std::size_t max_iters = 200;  // Newton steps
  double tolerance = 1e-5;      // relative primal-dual gap
};

struct ShortTermOptions {
  SdpOptions sdp;
  std::size_t rand_trials = 100;
};

/// Optimum of the relaxed beamforming problem: maximise relaxed_objective
/// over {X >= 0, tr X = 1}.
struct RelaxedSdpResult {
  ComplexMatrix g_hat;
  double value = 0.0;        // t(g_hat)
  double upper_bound = 0.0;  // certified t* <= upper_bound
  double alpha_lb = 0.0;     // L_0 / upper_bound, a guaranteed lower bound
  std::size_t iterations = 0;  // Newton steps
  bool certified = false;      // relative gap reached the tolerance
};

struct ShortTermSolution {
  ComplexMatrix g;               // n_rx x L, tr(G G^H) = 1
  double alpha = 0.0;            // exact scale for G
  double alpha_surrogate = 0.0;  // max_n L_0 / (c_n lambda_min(G^H H_n H_n^H G))
  ComplexMatrix g_hat;
  double alpha_lb = 0.0;
  std::size_t candidate = 0;     // index of the winning randomisation draw
};

struct ShortTermResult {
  ShortTermSolution solution;
  TransceiverDesign design;
  std::vector<double> residual;  // c_n
};

/// c_n = P_n - e_n m_n s_tot. Throws InfeasibleAssignmentError when c_n <= 0.
std::vector<double> residual_power(std::span<const double> m, const EnergyModel& energy);

/// min_n c_n lambda_min(H_n^H X H_n). With one symbol per round and several
/// transmit antennas the effective channel G^H H_n is a row, so the
/// eigenvalue is replaced by the trace: min_n c_n tr(H_n^H X H_n).
double relaxed_objective(const ComplexMatrix& x, const ChannelSet& channels, std::span<const double> c,
                         std::size_t payload_per_round);

/// Throws DegenerateChannelError when some device is unreachable (t* ~ 0).
RelaxedSdpResult solve_relaxed_sdp(const ChannelSet& channels, std::span<const double> c,
                                   const EnergyModel& energy, const SdpOptions& options = {});

/// t_n = L_0 tr((G^H H_n H_n^H G)^{-1}) / L, the scale device n alone needs
/// per unit of residual power. Throws IllConditionedChannelError.
std::vector<double> device_scale_terms(const ComplexMatrix& g, const ChannelSet& channels,
                                       const EnergyModel& energy);

/// alpha = max_n t_n / c_n.
double alpha_for_G(const ComplexMatrix& g, const ChannelSet& channels, std::span<const double> c,
                   const EnergyModel& energy);

/// Scale implied by tr(K_n^{-1}) <= L / lambda_min(K_n), K_n = G^H H_n H_n^H G.
/// Never below alpha_for_G, equal when L = 1.
double surrogate_alpha_for_G(const ComplexMatrix& g, const ChannelSet& channels, std::span<const double> c,
                             const EnergyModel& energy);

/// Candidate 0 is the dominant-eigenvector factor of g_hat; candidates
/// 1..num_trials are normalize(g_hat^{1/2} R_k) with R_k standard complex
/// Gaussian. The smallest alpha wins, lowest index on ties.
ShortTermSolution gaussian_randomization(const ComplexMatrix& g_hat, const ChannelSet& channels,
                                         std::span<const double> c, const EnergyModel& energy,
                                         std::size_t num_trials, std::uint64_t seed);

/// Full chain: residual power, relaxed problem, randomisation, A = sqrt(alpha) G,
/// zero-forcing precoders.
ShortTermResult solve_short_term(const ChannelSet& channels, std::span<const double> m,
                                 const EnergyModel& energy, const ShortTermOptions& options,
                                 std::uint64_t seed);

/// Total energy e_n m_n s_tot + (L_0/L) tr(B_n B_n^H) of each device.
std::vector<double> device_energies(const TransceiverDesign& design, std::span<const double> m,
                                    const EnergyModel& energy);

}  // namespace airtp
