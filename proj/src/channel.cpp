#include "airtp/channel.hpp"

#include <cmath>
#include <string>

#include "airtp/rng.hpp"

namespace airtp {

void ChannelConfig::validate() const {
  if (n_devices < 1) throw ConfigError("channel.n_devices must be >= 1");
  if (n_rx < 1) throw ConfigError("channel.n_rx must be >= 1");
  if (n_tx < 1) throw ConfigError("channel.n_tx must be >= 1");
  if (!(variance > 0.0) || !std::isfinite(variance)) throw ConfigError("channel.variance must be > 0");
  if (!(noise_power >= 0.0) || !std::isfinite(noise_power))
    throw ConfigError("channel.noise_power must be >= 0");
  if (!std::isfinite(rician_mean.real()) || !std::isfinite(rician_mean.imag()))
    throw ConfigError("channel.rician_mean must be finite");
}

ChannelSet sample_channels(const ChannelConfig& config, std::uint64_t seed) {
  config.validate();
  ChannelSet set;
  set.matrices.reserve(config.n_devices);
  for (std::size_t n = 0; n < config.n_devices; ++n) {
    Rng rng(derive_seed(seed, n));
    set.matrices.push_back(
        complex_gaussian_matrix(config.n_rx, config.n_tx, rng, config.variance, config.rician_mean));
  }
  return set;
}

std::vector<cplx> sample_noise(const ChannelConfig& config, std::size_t length, std::uint64_t seed) {
  if (length < 1) throw DimensionError("sample_noise: length must be >= 1");
  std::vector<cplx> out(length);
  if (config.noise_power == 0.0) return out;
  Rng rng(seed);
  for (auto& v : out) v = rng.complex_normal(config.noise_power);
  return out;
}

}  // namespace airtp
