#pragma once

// Seeded sweeps over device counts and transports, and the report files.
//
// Perplexity here scores the toy model against its own noiseless
// predictions: the realised tokens are the argmax of the exact forward pass
// on a fixed synthetic input. It measures how far a transport's distortion
// moves the output distribution, not linguistic quality.

#include <span>
#include <string>
#include <vector>

#include "airtp/config.hpp"
#include "airtp/long_term.hpp"

namespace airtp {

/// exp(-mean(log_probs)). Throws InvalidProbabilityError on a positive or
/// non-finite entry and DimensionError on an empty input.
double perplexity(std::span<const double> log_probs);

/// log P(tokens[k]) read from row k of the log-softmax of `logits`.
std::vector<double> token_log_probs(const RealMatrix& logits, std::span<const std::size_t> tokens);

struct CellResult {
  Scheme scheme = Scheme::exact;
  std::size_t n_devices = 0;
  bool ok = true;
  std::string error;             // first failure, when any round failed
  std::size_t failed_rounds = 0;
  std::vector<double> mse;       // per successful round, per L-symbol round of unit-power symbols
  std::vector<double> mse_measured;  // same quantity measured on the forward pass traffic
  std::vector<double> perplexities;
  double mse_mean = 0.0;
  double mse_std = 0.0;
  double perplexity_median = 0.0;
  double comm_latency_s = 0.0;
  double token_latency_s = 0.0;
  std::vector<double> m;
};

struct AssignmentRecord {
  std::size_t n_devices = 0;
  bool ok = true;
  std::string error;
  LongTermResult result;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<AssignmentRecord> assignments;  // one per sweep entry
  std::vector<CellResult> cells;              // sweep-major, schemes in config order
};

/// For each swept N: stochastic SCA fixes m, then monte_carlo_rounds of
/// fresh channel blocks, short-term solves and one forward pass per scheme.
/// Deterministic in the config; failures are recorded per cell.
ExperimentReport run_sweep(const ExperimentConfig& config);

/// scheme,n_devices,mse_mean,mse_std,perplexity,comm_latency_s,token_latency_s,seed
std::string sweep_csv(const ExperimentReport& report);
/// n_devices,tau,m_1..m_K,sampled_mse,u0_norm,step_gamma with K the largest
/// swept N; unused m columns are empty.
std::string sweep_trace_csv(const ExperimentReport& report);
/// tau,m_1..m_N,sampled_mse,u0_norm,step_gamma for one run.
std::string trace_csv(const LongTermResult& result, std::size_t n_devices);
std::string report_json(const ExperimentReport& report);

/// Writes report.json, sweep.csv and sca_trace.csv into `dir` (created if
/// missing).
void write_report(const ExperimentReport& report, const std::string& dir);

/// Version plus git description, fixed at configure time.
const char* build_stamp();

}  // namespace airtp
