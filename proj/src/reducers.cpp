#include "airtp/reducers.hpp"

#include <cmath>
#include <string>

#include "airtp/rng.hpp"

namespace airtp {

namespace {

double at(const std::vector<double>& v, std::size_t call, const char* what) {
  if (call >= v.size())
    throw DimensionError(std::string(what) + ": no calibration for all-reduce call " + std::to_string(call));
  return v[call];
}

std::size_t block_of(std::size_t call, std::size_t rounds_per_block, std::size_t blocks) {
  const std::size_t b = call / rounds_per_block;
  if (b >= blocks) throw DimensionError("all-reduce call " + std::to_string(call) + " has no channel block");
  return b;
}

}  // namespace

Calibration Calibration::from_rms(const RealMatrix& rms, double clip_mult) {
  if (!(clip_mult > 0.0)) throw ConfigError("baselines.clip_mult must be > 0");
  Calibration c;
  for (std::size_t call = 0; call < rms.rows(); ++call) {
    double pooled = 0.0;
    std::vector<double> clip;
    for (double r : rms.row(call)) {
      pooled += r * r;
      clip.push_back(clip_mult * r);
    }
    pooled = std::sqrt(pooled / static_cast<double>(rms.cols()));
    // A silent call (all partials zero) still needs a usable scale.
    c.scale.push_back(std::sqrt(2.0) * (pooled > 0.0 ? pooled : 1.0));
    c.clip.push_back(std::move(clip));
  }
  return c;
}

AirReducer::AirReducer(std::span<const ChannelSet> channels, std::span<const TransceiverDesign> designs,
                       std::size_t rounds_per_block, std::vector<double> scale, double noise_power, std::uint64_t seed)
    : channels_(channels),
      designs_(designs),
      rounds_per_block_(rounds_per_block),
      scale_(std::move(scale)),
      noise_power_(noise_power),
      seed_(seed) {
  if (channels.size() != designs.size()) throw DimensionError("one design per channel block is required");
  if (rounds_per_block < 1) throw ConfigError("rounds_per_block must be >= 1");
}

RealMatrix AirReducer::reduce(std::span<const RealMatrix> partials, std::size_t call_index) const {
  const std::size_t b = block_of(call_index, rounds_per_block_, channels_.size());
  const double scale = at(scale_, call_index, "air reducer");
  const auto symbols = partials_to_symbols(partials, scale);
  try {
    const std::vector<cplx> y =
        air_transmit(symbols, designs_[b], channels_[b], noise_power_, derive_seed(seed_, call_index));
    return symbols_to_matrix(y, scale, partials.front().rows(), partials.front().cols());
  } catch (const Error& e) {
    throw Error("air all-reduce call " + std::to_string(call_index) + ": " + e.what());
  }
}

FdmaReducer::FdmaReducer(std::span<const ChannelSet> channels, std::span<const FdmaDesign> designs,
                         std::size_t rounds_per_block, std::vector<double> scale, double noise_power,
                         std::uint64_t seed)
    : channels_(channels),
      designs_(designs),
      rounds_per_block_(rounds_per_block),
      scale_(std::move(scale)),
      noise_power_(noise_power),
      seed_(seed) {
  if (channels.size() != designs.size()) throw DimensionError("one design per channel block is required");
  if (rounds_per_block < 1) throw ConfigError("rounds_per_block must be >= 1");
}

RealMatrix FdmaReducer::reduce(std::span<const RealMatrix> partials, std::size_t call_index) const {
  const std::size_t b = block_of(call_index, rounds_per_block_, channels_.size());
  try {
    return fdma_reduce(partials, designs_[b], channels_[b], noise_power_, derive_seed(seed_, call_index),
                       at(scale_, call_index, "fdma reducer"));
  } catch (const Error& e) {
    throw Error("fdma all-reduce call " + std::to_string(call_index) + ": " + e.what());
  }
}

DigitalReducer::DigitalReducer(std::size_t quant_bits, std::vector<std::vector<double>> clip)
    : quant_bits_(quant_bits), clip_(std::move(clip)) {}

RealMatrix DigitalReducer::reduce(std::span<const RealMatrix> partials, std::size_t call_index) const {
  if (call_index >= clip_.size())
    throw DimensionError("digital reducer: no calibration for all-reduce call " + std::to_string(call_index));
  return digital_reduce(partials, quant_bits_, clip_[call_index]);
}

MeasuringReducer::MeasuringReducer(const Reducer& inner, std::vector<double> scale)
    : inner_(inner), scale_(std::move(scale)) {}

RealMatrix MeasuringReducer::reduce(std::span<const RealMatrix> partials, std::size_t call_index) const {
  RealMatrix out = inner_.reduce(partials, call_index);
  const RealMatrix exact = sum_partials(partials);
  const double s = at(scale_, call_index, "measuring reducer");
  double err = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = out.data()[i] - exact.data()[i];
    err += d * d;
  }
  std::lock_guard lock(mutex_);
  error_ += err / (s * s);
  symbols_ += static_cast<double>(out.size()) / 2.0;
  return out;
}

double MeasuringReducer::mse_per_symbol() const {
  std::lock_guard lock(mutex_);
  return symbols_ > 0.0 ? error_ / symbols_ : 0.0;
}

}  // namespace airtp
