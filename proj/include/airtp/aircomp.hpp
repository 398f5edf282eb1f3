#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "airtp/channel.hpp"
#include "airtp/matrix.hpp"

namespace airtp {

/// Receive beamformer A (n_rx x L) and per-device precoders B_n (n_tx x L).
struct TransceiverDesign {
  ComplexMatrix a;
  std::vector<ComplexMatrix> b;

  std::size_t payload_length() const { return a.cols(); }
};

/// One round of symbols s_n (each length L) out of an all-reduce payload of
/// total_length symbols.
struct PayloadBlock {
  std::vector<std::vector<cplx>> symbols;
  std::size_t total_length = 0;
};

enum class SymbolDistribution { complex_gaussian, qpsk };

/// Condition-number limit on A^H H_n H_n^H A beyond which ZF is refused.
inline constexpr double kMaxZfCondition = 1e12;

/// B_n = (A^H H_n)^H (A^H H_n H_n^H A)^{-1}, so that A^H H_n B_n = I.
/// Throws IllConditionedChannelError naming the first bad device.
std::vector<ComplexMatrix> zero_forcing_precoders(const ComplexMatrix& a, const ChannelSet& channels);

/// s_hat = A^H (sum_n H_n B_n s_n + noise).
std::vector<cplx> transmit_round(const PayloadBlock& payload, const TransceiverDesign& design,
                                 const ChannelSet& channels, std::span<const cplx> noise);

/// sum_n ||A^H H_n B_n - I||_F^2 + noise_power * tr(A^H A).
double mse_closed_form(const TransceiverDesign& design, const ChannelSet& channels, double noise_power);

/// Monte-Carlo mean of ||s_hat - sum_n s_n||^2 with unit-power symbols and
/// fresh noise per trial. Trials are split into fixed seeded chunks, so the
/// value does not depend on the worker count.
double mse_empirical(const TransceiverDesign& design, const ChannelSet& channels, double noise_power,
                     std::size_t num_trials, std::uint64_t seed,
                     SymbolDistribution distribution = SymbolDistribution::complex_gaussian);

/// Communication energy of one device for a whole payload: (L0/L) tr(B B^H).
double precoder_energy(const ComplexMatrix& b, std::size_t total_length);

/// Real activations packed two per complex symbol (re, im); an odd tail is
/// padded with zero.
std::vector<cplx> pack_real_pairs(std::span<const double> values);
/// Inverse of pack_real_pairs, truncated to `count` reals.
std::vector<double> unpack_real_pairs(std::span<const cplx> symbols, std::size_t count);

}  // namespace airtp
