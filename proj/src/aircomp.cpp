#include "airtp/aircomp.hpp"

#include <cmath>

#include "airtp/linalg.hpp"
#include "airtp/parallel.hpp"
#include "airtp/rng.hpp"

namespace airtp {
namespace {

constexpr std::size_t kMseChunks = 16;

void check_design(const TransceiverDesign& design, const ChannelSet& channels) {
  if (design.b.size() != channels.size())
    throw DimensionError("design has " + std::to_string(design.b.size()) + " precoders for " +
                         std::to_string(channels.size()) + " devices");
  const std::size_t l = design.a.cols();
  if (design.a.rows() != channels.n_rx()) throw DimensionError("receive beamformer row count != n_rx");
  for (std::size_t n = 0; n < channels.size(); ++n) {
    if (channels[n].rows() != design.a.rows())
      throw DimensionError("channel " + std::to_string(n) + " has the wrong row count");
    if (design.b[n].rows() != channels[n].cols() || design.b[n].cols() != l)
      throw DimensionError("precoder " + std::to_string(n) + " has shape " +
                           detail::shape_str(design.b[n].rows(), design.b[n].cols()));
  }
}

cplx draw_symbol(Rng& rng, SymbolDistribution d) {
  if (d == SymbolDistribution::qpsk) {
    constexpr double h = 0.70710678118654752440;
    return {(rng() & 1) ? h : -h, (rng() & 1) ? h : -h};
  }
  return rng.complex_normal(1.0);
}

}  // namespace

std::vector<ComplexMatrix> zero_forcing_precoders(const ComplexMatrix& a, const ChannelSet& channels) {
  std::vector<ComplexMatrix> out;
  out.reserve(channels.size());
  for (std::size_t n = 0; n < channels.size(); ++n) {
    if (channels[n].rows() != a.rows())
      throw DimensionError("zero_forcing_precoders: channel " + std::to_string(n) + " row mismatch");
    const ComplexMatrix eff = adjoint_times(a, channels[n]);  // L x n_tx
    const ComplexMatrix gram = hermitian_part(times_adjoint(eff, eff));
    double cond = 0.0;
    ComplexMatrix inv;
    try {
      inv = hermitian_inverse(gram, &cond);
    } catch (const NotPsdError&) {
      throw IllConditionedChannelError(n, cond);
    }
    if (!(cond < kMaxZfCondition)) throw IllConditionedChannelError(n, cond);
    out.push_back(eff.adjoint() * inv);
  }
  return out;
}

std::vector<cplx> transmit_round(const PayloadBlock& payload, const TransceiverDesign& design,
                                 const ChannelSet& channels, std::span<const cplx> noise) {
  check_design(design, channels);
  const std::size_t l = design.a.cols();
  if (payload.symbols.size() != channels.size())
    throw DimensionError("payload has " + std::to_string(payload.symbols.size()) + " streams for " +
                         std::to_string(channels.size()) + " devices");
  if (payload.total_length != 0 && l > payload.total_length)
    throw DimensionError("round length exceeds total payload length");
  if (noise.size() != design.a.rows()) throw DimensionError("noise length must equal n_rx");

  std::vector<cplx> rx(noise.begin(), noise.end());
  for (std::size_t n = 0; n < channels.size(); ++n) {
    const auto& s = payload.symbols[n];
    if (s.size() != l) throw DimensionError("symbol vector length != L");
    const std::vector<cplx> x = matvec<cplx>(design.b[n], s);
    const std::vector<cplx> y = matvec<cplx>(channels[n], x);
    for (std::size_t i = 0; i < rx.size(); ++i) rx[i] += y[i];
  }
  std::vector<cplx> out(l);
  for (std::size_t j = 0; j < l; ++j) {
    cplx acc = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) acc += std::conj(design.a(i, j)) * rx[i];
    out[j] = acc;
  }
  return out;
}

double mse_closed_form(const TransceiverDesign& design, const ChannelSet& channels, double noise_power) {
  check_design(design, channels);
  const std::size_t l = design.a.cols();
  double total = 0.0;
  for (std::size_t n = 0; n < channels.size(); ++n) {
    ComplexMatrix r = adjoint_times(design.a, channels[n] * design.b[n]);
    for (std::size_t i = 0; i < l; ++i) r(i, i) -= 1.0;
    total += gram_trace(r);
  }
  return total + noise_power * gram_trace(design.a);
}

double mse_empirical(const TransceiverDesign& design, const ChannelSet& channels, double noise_power,
                     std::size_t num_trials, std::uint64_t seed, SymbolDistribution distribution) {
  check_design(design, channels);
  if (num_trials < 1) throw DimensionError("mse_empirical: num_trials must be >= 1");
  const std::size_t n_dev = channels.size();
  const std::size_t l = design.a.cols();
  const std::size_t n_rx = design.a.rows();
  const double noise_scale = std::sqrt(noise_power);

  // Per-device end-to-end maps A^H H_n B_n and the noise map A^H, precomputed.
  std::vector<ComplexMatrix> e2e;
  e2e.reserve(n_dev);
  for (std::size_t n = 0; n < n_dev; ++n) e2e.push_back(adjoint_times(design.a, channels[n] * design.b[n]));
  const ComplexMatrix ah = design.a.adjoint();

  std::vector<double> partial(kMseChunks, 0.0);
  parallel_for(kMseChunks, [&](std::size_t chunk) {
    const std::size_t begin = num_trials * chunk / kMseChunks;
    const std::size_t end = num_trials * (chunk + 1) / kMseChunks;
    Rng rng(derive_seed(seed, chunk));
    std::vector<cplx> s(l), w(n_rx), err(l);
    double acc = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
      std::fill(err.begin(), err.end(), cplx{});
      for (std::size_t n = 0; n < n_dev; ++n) {
        for (auto& v : s) v = draw_symbol(rng, distribution);
        for (std::size_t i = 0; i < l; ++i) {
          cplx y = -s[i];
          for (std::size_t j = 0; j < l; ++j) y += e2e[n](i, j) * s[j];
          err[i] += y;
        }
      }
      for (auto& v : w) v = noise_scale * rng.complex_normal(1.0);
      for (std::size_t i = 0; i < l; ++i) {
        cplx y = 0.0;
        for (std::size_t k = 0; k < n_rx; ++k) y += ah(i, k) * w[k];
        acc += std::norm(err[i] + y);
      }
    }
    partial[chunk] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(num_trials);
}

double precoder_energy(const ComplexMatrix& b, std::size_t total_length) {
  if (b.cols() == 0) throw DimensionError("precoder has no columns");
  return static_cast<double>(total_length) / static_cast<double>(b.cols()) * gram_trace(b);
}

std::vector<cplx> pack_real_pairs(std::span<const double> values) {
  std::vector<cplx> out((values.size() + 1) / 2);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i % 2 == 0)
      out[i / 2].real(values[i]);
    else
      out[i / 2].imag(values[i]);
  }
  return out;
}

std::vector<double> unpack_real_pairs(std::span<const cplx> symbols, std::size_t count) {
  if (count > 2 * symbols.size()) throw DimensionError("unpack_real_pairs: not enough symbols");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = (i % 2 == 0) ? symbols[i / 2].real() : symbols[i / 2].imag();
  return out;
}

}  // namespace airtp
