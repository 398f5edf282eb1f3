#pragma once

// Experiment configuration and its JSON form. Unknown keys are rejected so a
// typo never silently falls back to a default.

#include <cstdint>
#include <string>
#include <vector>

#include "airtp/baselines.hpp"
#include "airtp/channel.hpp"
#include "airtp/long_term.hpp"
#include "airtp/short_term.hpp"
#include "airtp/tensorpar.hpp"

namespace airtp {

/// Device-count independent energy parameters. Device n of an N-device run
/// takes energy_coefficients[n] when the list is given, energy_coefficient
/// otherwise.
struct EnergyConfig {
  double energy_coefficient = 5e-4;
  std::vector<double> energy_coefficients;
  double weights_per_layer = 1000.0;
  double power_budget = 1.0;
  std::size_t payload_total = 4;
  std::size_t payload_per_round = 1;

  EnergyModel for_devices(std::size_t n) const;
};

struct BaselineConfig {
  LatencyModel latency;
  double clip_mult = 4.0;
};

struct ExperimentConfig {
  ChannelConfig channel;  // n_devices is used by single-N commands; sweeps override it
  EnergyConfig energy;
  TransformerConfig model;
  ShortTermOptions short_term;  // used by every short-term solve, including those inside long_term
  LongTermOptions long_term;
  BaselineConfig baselines;
  std::vector<std::size_t> sweep{1, 2, 4, 8};
  std::vector<Scheme> schemes{Scheme::exact, Scheme::air, Scheme::digital, Scheme::fdma};
  std::size_t monte_carlo_rounds = 10;
  std::size_t rounds_per_block = 1;  // all-reduce calls sharing one channel realisation
  std::uint64_t seed = 1;

  /// Field ranges and cross-field consistency. Throws ConfigError.
  void validate() const;
  /// Uniform assignment must leave every device some residual power for
  /// every swept N (and channel.n_devices). Throws InfeasibleError.
  void check_feasible() const;
};

/// Throws ConfigError on malformed JSON, a wrong type, an unknown key or an
/// invalid value.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON of every field (defaults included), for report echoes.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace airtp
