#pragma once

#include <cstdint>
#include <vector>

#include "airtp/matrix.hpp"

namespace airtp {

struct ChannelConfig {
  std::size_t n_devices = 8;
  std::size_t n_rx = 20;
  std::size_t n_tx = 4;
  cplx rician_mean = 1.0;  // line-of-sight component of every entry
  double variance = 1.0;   // complex variance of the scattered part
  double noise_power = 1.0;

  /// Throws ConfigError on an invalid field.
  void validate() const;
};

/// Uplink channels H_n (n_rx x n_tx) of one coherence block.
struct ChannelSet {
  std::vector<ComplexMatrix> matrices;

  std::size_t size() const noexcept { return matrices.size(); }
  const ComplexMatrix& operator[](std::size_t n) const { return matrices[n]; }
  std::size_t n_rx() const { return matrices.empty() ? 0 : matrices.front().rows(); }
  std::size_t n_tx() const { return matrices.empty() ? 0 : matrices.front().cols(); }
};

/// Each entry is mean + CN(0, variance). Device n draws from the stream
/// derive_seed(seed, n), so its channel does not depend on the device count.
ChannelSet sample_channels(const ChannelConfig& config, std::uint64_t seed);

/// `length` i.i.d. CN(0, noise_power) samples.
std::vector<cplx> sample_noise(const ChannelConfig& config, std::size_t length, std::uint64_t seed);

}  // namespace airtp
