#pragma once

// Channel-backed all-reduce: each call's partials are turned into unit-power
// symbol streams, sent over a transport, and turned back into a matrix.
// Consecutive calls share a channel block (rounds_per_block calls each).

#include <cstdint>
#include <mutex>
#include <span>
#include <vector>

#include "airtp/aircomp.hpp"
#include "airtp/baselines.hpp"
#include "airtp/channel.hpp"
#include "airtp/tensorpar.hpp"

namespace airtp {

/// Symbol scales and clip ranges from the partial RMS of an exact
/// calibration pass (calls x devices, see partial_rms_profile). The scale of
/// a call is sqrt(2) times the RMS pooled over devices, so symbols have unit
/// power on average; every device must share it for the superposition to
/// add up. Clip ranges are clip_mult times each device's own RMS.
struct Calibration {
  std::vector<double> scale;             // per call
  std::vector<std::vector<double>> clip; // per call, per device

  static Calibration from_rms(const RealMatrix& rms, double clip_mult);
};

class AirReducer final : public Reducer {
 public:
  AirReducer(std::span<const ChannelSet> channels, std::span<const TransceiverDesign> designs,
             std::size_t rounds_per_block, std::vector<double> scale, double noise_power, std::uint64_t seed);
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const override;

 private:
  std::span<const ChannelSet> channels_;
  std::span<const TransceiverDesign> designs_;
  std::size_t rounds_per_block_;
  std::vector<double> scale_;
  double noise_power_;
  std::uint64_t seed_;
};

class FdmaReducer final : public Reducer {
 public:
  FdmaReducer(std::span<const ChannelSet> channels, std::span<const FdmaDesign> designs,
              std::size_t rounds_per_block, std::vector<double> scale, double noise_power, std::uint64_t seed);
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const override;

 private:
  std::span<const ChannelSet> channels_;
  std::span<const FdmaDesign> designs_;
  std::size_t rounds_per_block_;
  std::vector<double> scale_;
  double noise_power_;
  std::uint64_t seed_;
};

class DigitalReducer final : public Reducer {
 public:
  DigitalReducer(std::size_t quant_bits, std::vector<std::vector<double>> clip);
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const override;

 private:
  std::size_t quant_bits_;
  std::vector<std::vector<double>> clip_;
};

/// Wraps a reducer and accumulates its error against the exact sum in
/// symbol units: per-call squared error over scale^2, counted per complex
/// symbol.
class MeasuringReducer final : public Reducer {
 public:
  MeasuringReducer(const Reducer& inner, std::vector<double> scale);
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call_index) const override;

  /// Mean squared error per complex symbol (0 before the first call).
  double mse_per_symbol() const;

 private:
  const Reducer& inner_;
  std::vector<double> scale_;
  mutable std::mutex mutex_;
  mutable double error_ = 0.0;
  mutable double symbols_ = 0.0;
};

}  // namespace airtp
