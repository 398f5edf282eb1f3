#pragma once

// Comparison transports for the all-reduce (quantised digital OFDMA and
// uncoded analog FDMA) and the analytic latency model.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "airtp/aircomp.hpp"
#include "airtp/channel.hpp"
#include "airtp/matrix.hpp"
#include "airtp/short_term.hpp"

namespace airtp {

enum class Scheme { exact, air, digital, fdma };

std::string scheme_name(Scheme s);
/// Throws ConfigError on an unknown name.
Scheme parse_scheme(const std::string& name);

/// Midrise uniform quantiser with 2^bits levels on [-clip, clip]; values
/// outside are clipped first.
double quantize_midrise(double v, std::size_t bits, double clip);

/// Every partial quantised entry-wise, then summed. Deterministic.
RealMatrix digital_reduce(std::span<const RealMatrix> partials, std::size_t quant_bits, double clip_range);

/// Per-device clip ranges. A zero range marks a device with an empty shard:
/// it sends nothing, and its partial must be exactly zero.
RealMatrix digital_reduce(std::span<const RealMatrix> partials, std::size_t quant_bits,
                          std::span<const double> clip_ranges);

/// Per-device single-user links: device n uses the top-L left singular
/// vectors of H_n as receiver direction, scaled to spend all of c_n.
struct FdmaDesign {
  std::vector<TransceiverDesign> links;  // one single-device design each
  std::vector<double> alpha;             // scale of each link
};

FdmaDesign fdma_design(const ChannelSet& channels, std::span<const double> c, const EnergyModel& energy);

/// sum_n of the single-link closed-form MSE: N independently noised estimates.
double fdma_mse_closed_form(const FdmaDesign& design, const ChannelSet& channels, double noise_power);

/// Sends `symbols[n]` (any length) over link n of `design` in rounds of L,
/// each with fresh noise, and returns the sum of the N equalised streams.
std::vector<cplx> fdma_transmit(std::span<const std::vector<cplx>> symbols, const FdmaDesign& design,
                                const ChannelSet& channels, double noise_power, std::uint64_t seed);

/// Same for the AirComp chain: one superposed transmission per round.
std::vector<cplx> air_transmit(std::span<const std::vector<cplx>> symbols, const TransceiverDesign& design,
                               const ChannelSet& channels, double noise_power, std::uint64_t seed);

/// Real partials as unit-power symbol streams: entries divided by `scale`
/// and packed two per symbol.
std::vector<std::vector<cplx>> partials_to_symbols(std::span<const RealMatrix> partials, double scale);
/// Inverse for the reduced stream.
RealMatrix symbols_to_matrix(std::span<const cplx> symbols, double scale, std::size_t rows, std::size_t cols);

/// FDMA all-reduce of real partials; see fdma_transmit.
RealMatrix fdma_reduce(std::span<const RealMatrix> partials, const FdmaDesign& design, const ChannelSet& channels,
                       double noise_power, std::uint64_t seed, double scale = 1.0);

/// Convenience form that builds the design from the residual powers.
RealMatrix fdma_reduce(std::span<const RealMatrix> partials, const ChannelSet& channels, std::span<const double> c,
                       const EnergyModel& energy, double noise_power, std::uint64_t seed, double scale = 1.0);

struct LatencyModel {
  double bandwidth_hz = 10e6;
  std::size_t quant_bits = 8;
  double bits_per_symbol = 8.0;
  // Default: compute time of the whole model on one device is 16x the air
  // comm time per token, which puts the digital turning point between N = 4
  // and N = 8.
  double compute_rate = 1.67e10;    // weights per second per device
  double payload_symbols = 4096.0;  // symbols per all-reduce
  std::size_t reduces_per_token = 64;
  double model_weights = 7.0e9;     // weights evaluated per token

  void validate() const;
};

/// Time spent on all-reduce traffic per token. Air: every device at once on
/// the whole band. FDMA: N serialised shares. Digital: FDMA times Q bits per
/// symbol over bits_per_symbol. Exact: zero (ideal reference).
double comm_latency(Scheme scheme, std::size_t n_devices, const LatencyModel& model);

/// Slowest device's compute share plus comm_latency.
double token_latency(Scheme scheme, std::span<const double> m, const LatencyModel& model);

}  // namespace airtp
