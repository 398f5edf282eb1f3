#include "airtp/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "airtp/linalg.hpp"
#include "airtp/rng.hpp"

namespace airtp {

namespace {

std::vector<cplx> round_noise(std::size_t n_rx, double noise_power, std::uint64_t seed) {
  std::vector<cplx> w(n_rx);
  if (noise_power == 0.0) return w;
  Rng rng(seed);
  for (auto& v : w) v = rng.complex_normal(noise_power);
  return w;
}

std::size_t common_length(std::span<const std::vector<cplx>> symbols) {
  if (symbols.empty()) throw DimensionError("no symbol streams");
  for (const auto& s : symbols)
    if (s.size() != symbols.front().size()) throw DimensionError("symbol streams differ in length");
  return symbols.front().size();
}

std::vector<cplx> slice(const std::vector<cplx>& s, std::size_t first, std::size_t l) {
  std::vector<cplx> out(l);
  for (std::size_t i = 0; i < l && first + i < s.size(); ++i) out[i] = s[first + i];
  return out;
}

}  // namespace

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::exact:
      return "exact";
    case Scheme::air:
      return "air";
    case Scheme::digital:
      return "digital";
    case Scheme::fdma:
      return "fdma";
  }
  return "unknown";
}

Scheme parse_scheme(const std::string& name) {
  if (name == "exact") return Scheme::exact;
  if (name == "air") return Scheme::air;
  if (name == "digital") return Scheme::digital;
  if (name == "fdma") return Scheme::fdma;
  throw ConfigError("unknown scheme '" + name + "' (expected exact, air, digital or fdma)");
}

double quantize_midrise(double v, std::size_t bits, double clip) {
  if (bits < 1 || bits > 52) throw DomainError("quant_bits must be in [1, 52]");
  if (!(clip > 0.0)) throw DomainError("clip_range must be > 0");
  const double levels = std::ldexp(1.0, static_cast<int>(bits));
  const double step = 2.0 * clip / levels;
  const double idx = std::clamp(std::floor(std::clamp(v, -clip, clip) / step), -levels / 2.0, levels / 2.0 - 1.0);
  return (idx + 0.5) * step;
}

RealMatrix digital_reduce(std::span<const RealMatrix> partials, std::size_t quant_bits, double clip_range) {
  const std::vector<double> clips(partials.size(), clip_range);
  if (!(clip_range > 0.0)) throw DomainError("clip_range must be > 0");
  return digital_reduce(partials, quant_bits, clips);
}

RealMatrix digital_reduce(std::span<const RealMatrix> partials, std::size_t quant_bits,
                          std::span<const double> clip_ranges) {
  if (partials.empty()) throw DimensionError("all-reduce needs at least one partial");
  if (clip_ranges.size() != partials.size()) throw DimensionError("one clip range per device is required");
  RealMatrix out(partials.front().rows(), partials.front().cols());
  for (std::size_t n = 0; n < partials.size(); ++n) {
    const RealMatrix& p = partials[n];
    if (p.rows() != out.rows() || p.cols() != out.cols()) throw DimensionError("partials differ in shape");
    if (clip_ranges[n] == 0.0) {
      for (double v : p.values())
        if (v != 0.0) throw DomainError("device " + std::to_string(n) + " has no clip range but a non-zero partial");
      continue;
    }
    for (std::size_t i = 0; i < p.size(); ++i)
      out.data()[i] += quantize_midrise(p.data()[i], quant_bits, clip_ranges[n]);
  }
  return out;
}

FdmaDesign fdma_design(const ChannelSet& channels, std::span<const double> c, const EnergyModel& energy) {
  if (c.size() != channels.size()) throw DimensionError("residual power vector length != device count");
  const std::size_t l = energy.payload_per_round;
  if (l > channels.n_tx() || l > channels.n_rx()) throw DimensionError("payload_per_round exceeds the antenna counts");
  FdmaDesign out;
  for (std::size_t n = 0; n < channels.size(); ++n) {
    if (!(c[n] > 0.0)) throw InfeasibleAssignmentError(n, c[n]);
    const SvdResult s = svd(channels[n]);
    const ComplexMatrix g = s.u.columns(0, l) * cplx(1.0 / std::sqrt(static_cast<double>(l)), 0.0);
    const ChannelSet single{{channels[n]}};
    const double alpha = alpha_for_G(g, single, std::span<const double>(&c[n], 1), energy);
    TransceiverDesign link;
    link.a = g * cplx(std::sqrt(alpha), 0.0);
    link.b = zero_forcing_precoders(link.a, single);
    out.links.push_back(std::move(link));
    out.alpha.push_back(alpha);
  }
  return out;
}

double fdma_mse_closed_form(const FdmaDesign& design, const ChannelSet& channels, double noise_power) {
  if (design.links.size() != channels.size()) throw DimensionError("FDMA design size != device count");
  double total = 0.0;
  for (std::size_t n = 0; n < channels.size(); ++n)
    total += mse_closed_form(design.links[n], ChannelSet{{channels[n]}}, noise_power);
  return total;
}

std::vector<cplx> fdma_transmit(std::span<const std::vector<cplx>> symbols, const FdmaDesign& design,
                                const ChannelSet& channels, double noise_power, std::uint64_t seed) {
  const std::size_t len = common_length(symbols);
  if (symbols.size() != channels.size() || design.links.size() != channels.size())
    throw DimensionError("FDMA stream, design and channel counts disagree");
  std::vector<cplx> out(len);
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const TransceiverDesign& link = design.links[n];
    const ChannelSet single{{channels[n]}};
    const std::size_t l = link.payload_length();
    for (std::size_t first = 0, round = 0; first < len; first += l, ++round) {
      PayloadBlock block{{slice(symbols[n], first, l)}, 0};
      const std::vector<cplx> w = round_noise(channels.n_rx(), noise_power, derive_seed(derive_seed(seed, n), round));
      const std::vector<cplx> y = transmit_round(block, link, single, w);
      for (std::size_t i = 0; i < l && first + i < len; ++i) out[first + i] += y[i];
    }
  }
  return out;
}

std::vector<cplx> air_transmit(std::span<const std::vector<cplx>> symbols, const TransceiverDesign& design,
                               const ChannelSet& channels, double noise_power, std::uint64_t seed) {
  const std::size_t len = common_length(symbols);
  if (symbols.size() != channels.size()) throw DimensionError("stream count != device count");
  const std::size_t l = design.payload_length();
  std::vector<cplx> out(len);
  PayloadBlock block{std::vector<std::vector<cplx>>(symbols.size()), 0};
  for (std::size_t first = 0, round = 0; first < len; first += l, ++round) {
    for (std::size_t n = 0; n < symbols.size(); ++n) block.symbols[n] = slice(symbols[n], first, l);
    const std::vector<cplx> w = round_noise(channels.n_rx(), noise_power, derive_seed(seed, round));
    const std::vector<cplx> y = transmit_round(block, design, channels, w);
    for (std::size_t i = 0; i < l && first + i < len; ++i) out[first + i] = y[i];
  }
  return out;
}

std::vector<std::vector<cplx>> partials_to_symbols(std::span<const RealMatrix> partials, double scale) {
  if (!(scale > 0.0)) throw DomainError("symbol scale must be > 0");
  std::vector<std::vector<cplx>> out;
  out.reserve(partials.size());
  std::vector<double> buf;
  for (const auto& p : partials) {
    buf.assign(p.values().begin(), p.values().end());
    for (double& v : buf) v /= scale;
    out.push_back(pack_real_pairs(buf));
  }
  return out;
}

RealMatrix symbols_to_matrix(std::span<const cplx> symbols, double scale, std::size_t rows, std::size_t cols) {
  const std::vector<double> v = unpack_real_pairs(symbols, rows * cols);
  RealMatrix out(rows, cols);
  for (std::size_t i = 0; i < v.size(); ++i) out.data()[i] = v[i] * scale;
  return out;
}

RealMatrix fdma_reduce(std::span<const RealMatrix> partials, const FdmaDesign& design, const ChannelSet& channels,
                       double noise_power, std::uint64_t seed, double scale) {
  if (partials.empty()) throw DimensionError("all-reduce needs at least one partial");
  const auto symbols = partials_to_symbols(partials, scale);
  const std::vector<cplx> y = fdma_transmit(symbols, design, channels, noise_power, seed);
  return symbols_to_matrix(y, scale, partials.front().rows(), partials.front().cols());
}

RealMatrix fdma_reduce(std::span<const RealMatrix> partials, const ChannelSet& channels, std::span<const double> c,
                       const EnergyModel& energy, double noise_power, std::uint64_t seed, double scale) {
  return fdma_reduce(partials, fdma_design(channels, c, energy), channels, noise_power, seed, scale);
}

void LatencyModel::validate() const {
  if (!(bandwidth_hz > 0.0)) throw ConfigError("baselines.bandwidth_hz must be > 0");
  if (quant_bits < 1) throw ConfigError("baselines.quant_bits must be >= 1");
  if (!(bits_per_symbol > 0.0)) throw ConfigError("baselines.bits_per_symbol must be > 0");
  if (!(compute_rate > 0.0)) throw ConfigError("baselines.compute_rate must be > 0");
  if (!(payload_symbols > 0.0)) throw ConfigError("baselines.payload_symbols must be > 0");
  if (reduces_per_token < 1) throw ConfigError("baselines.reduces_per_token must be >= 1");
  if (!(model_weights > 0.0)) throw ConfigError("baselines.model_weights must be > 0");
}

double comm_latency(Scheme scheme, std::size_t n_devices, const LatencyModel& model) {
  if (n_devices < 1) throw DomainError("comm_latency needs at least one device");
  model.validate();
  const double air = model.payload_symbols * static_cast<double>(model.reduces_per_token) / model.bandwidth_hz;
  const double n = static_cast<double>(n_devices);
  switch (scheme) {
    case Scheme::exact:
      return 0.0;
    case Scheme::air:
      return air;
    case Scheme::fdma:
      return air * n;
    case Scheme::digital:
      return air * n * static_cast<double>(model.quant_bits) / model.bits_per_symbol;
  }
  return 0.0;
}

double token_latency(Scheme scheme, std::span<const double> m, const LatencyModel& model) {
  if (m.empty()) throw DomainError("token_latency needs at least one device");
  const double share = *std::max_element(m.begin(), m.end());
  return share * model.model_weights / model.compute_rate + comm_latency(scheme, m.size(), model);
}

}  // namespace airtp
