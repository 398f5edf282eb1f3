#include "airtp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "airtp/parallel.hpp"
#include "airtp/reducers.hpp"
#include "airtp/rng.hpp"
#include "airtp/tensorpar.hpp"

#ifndef AIRTP_BUILD_STAMP
#define AIRTP_BUILD_STAMP "airtp-unknown"
#endif

namespace airtp {

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;
constexpr std::uint64_t kTextStream = 0x74657874ULL;
constexpr std::uint64_t kCalibrationStream = 0x63616c6962ULL;
constexpr std::uint64_t kSweepStream = 0x7377656570ULL;
constexpr std::uint64_t kSolveStream = 0x736f6c7665ULL;
constexpr std::uint64_t kAirNoiseStream = 0x6169726eULL;
constexpr std::uint64_t kFdmaNoiseStream = 0x66646d61ULL;

struct SharedInputs {
  TransformerModel model;
  RealMatrix eval;
  RealMatrix calibration;
  std::vector<std::size_t> realized;  // argmax tokens of the exact model on `eval`
};

struct RoundOutcome {
  bool ok = false;
  std::string error;
  double mse = 0.0;
  double mse_measured = 0.0;
  double perplexity = 0.0;
};

std::vector<std::size_t> synthetic_tokens(const TransformerConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> t(cfg.seq_len);
  for (auto& v : t) v = static_cast<std::size_t>(rng() % cfg.vocab_size);
  return t;
}

SharedInputs make_inputs(const ExperimentConfig& config) {
  SharedInputs s;
  s.model = make_model(config.model, derive_seed(config.seed, kModelStream));
  s.eval = embed(s.model, synthetic_tokens(config.model, derive_seed(config.seed, kTextStream)));
  s.calibration = embed(s.model, synthetic_tokens(config.model, derive_seed(config.seed, kCalibrationStream)));
  s.realized = argmax_rows(centralized_forward(s.model, s.eval));
  return s;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// One Monte-Carlo round at a fixed assignment: channel blocks, designs, one
// forward pass per scheme.
std::vector<RoundOutcome> run_round(const ExperimentConfig& config, const SharedInputs& in, std::size_t n_devices,
                                    std::span<const double> m, const Calibration& cal, std::uint64_t round_seed) {
  const std::size_t calls = config.model.reduces_per_pass();
  const std::size_t blocks = std::max<std::size_t>(1, (calls + config.rounds_per_block - 1) / config.rounds_per_block);
  const EnergyModel energy = config.energy.for_devices(n_devices);
  ChannelConfig channel = config.channel;
  channel.n_devices = n_devices;
  const double noise = channel.noise_power;
  const double l = static_cast<double>(energy.payload_per_round);

  std::vector<ChannelSet> channels;
  for (std::size_t b = 0; b < blocks; ++b) channels.push_back(sample_channels(channel, derive_seed(round_seed, b)));

  auto wants = [&](Scheme s) { return std::find(config.schemes.begin(), config.schemes.end(), s) != config.schemes.end(); };
  std::string air_error, fdma_error;
  std::vector<TransceiverDesign> air;
  std::vector<double> air_mse;
  if (wants(Scheme::air)) {
    try {
      for (std::size_t b = 0; b < blocks; ++b) {
        const ShortTermResult st = solve_short_term(channels[b], m, energy, config.short_term,
                                                    derive_seed(derive_seed(round_seed, kSolveStream), b));
        air_mse.push_back(mse_closed_form(st.design, channels[b], noise));
        air.push_back(st.design);
      }
    } catch (const Error& e) {
      air_error = e.what();
    }
  }
  std::vector<FdmaDesign> fdma;
  std::vector<double> fdma_mse;
  if (wants(Scheme::fdma)) {
    try {
      const std::vector<double> c = residual_power(m, energy);
      for (std::size_t b = 0; b < blocks; ++b) {
        fdma.push_back(fdma_design(channels[b], c, energy));
        fdma_mse.push_back(fdma_mse_closed_form(fdma.back(), channels[b], noise));
      }
    } catch (const Error& e) {
      fdma_error = e.what();
    }
  }

  std::vector<RoundOutcome> out(config.schemes.size());
  for (std::size_t i = 0; i < config.schemes.size(); ++i) {
    RoundOutcome& o = out[i];
    try {
      std::unique_ptr<Reducer> reducer;
      switch (config.schemes[i]) {
        case Scheme::exact:
          reducer = std::make_unique<ExactReducer>();
          break;
        case Scheme::air:
          if (!air_error.empty()) throw Error(air_error);
          reducer = std::make_unique<AirReducer>(channels, air, config.rounds_per_block, cal.scale, noise,
                                                 derive_seed(round_seed, kAirNoiseStream));
          o.mse = mean_of(air_mse);
          break;
        case Scheme::fdma:
          if (!fdma_error.empty()) throw Error(fdma_error);
          reducer = std::make_unique<FdmaReducer>(channels, fdma, config.rounds_per_block, cal.scale, noise,
                                                  derive_seed(round_seed, kFdmaNoiseStream));
          o.mse = mean_of(fdma_mse);
          break;
        case Scheme::digital:
          reducer = std::make_unique<DigitalReducer>(config.baselines.latency.quant_bits, cal.clip);
          break;
      }
      const MeasuringReducer measured(*reducer, cal.scale);
      const RealMatrix logits = forward_pass(in.model, in.eval, m, measured);
      o.mse_measured = measured.mse_per_symbol() * l;
      if (config.schemes[i] == Scheme::digital) o.mse = o.mse_measured;
      o.perplexity = perplexity(token_log_probs(logits, in.realized));
      o.ok = true;
    } catch (const Error& e) {
      o.error = e.what();
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

double perplexity(std::span<const double> log_probs) {
  if (log_probs.empty()) throw DimensionError("perplexity needs at least one token");
  double s = 0.0;
  for (double lp : log_probs) {
    if (!std::isfinite(lp) || lp > 0.0) throw InvalidProbabilityError("log-probability must be finite and <= 0");
    s += lp;
  }
  return std::exp(-s / static_cast<double>(log_probs.size()));
}

std::vector<double> token_log_probs(const RealMatrix& logits, std::span<const std::size_t> tokens) {
  if (tokens.size() != logits.rows()) throw DimensionError("one token per logits row is required");
  const RealMatrix lp = log_softmax(logits);
  std::vector<double> out(tokens.size());
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k] >= lp.cols()) throw DimensionError("token id out of vocabulary");
    out[k] = std::min(lp(k, tokens[k]), 0.0);
  }
  return out;
}

ExperimentReport run_sweep(const ExperimentConfig& config) {
  config.validate();
  ExperimentReport report;
  report.config = config;
  const SharedInputs in = make_inputs(config);
  const std::size_t n_sweep = config.sweep.size();
  const std::size_t n_schemes = config.schemes.size();
  const std::size_t rounds = config.monte_carlo_rounds;

  // Long-term assignment per device count.
  report.assignments.resize(n_sweep);
  LongTermOptions long_term = config.long_term;
  long_term.short_term = config.short_term;
  parallel_for(n_sweep, [&](std::size_t i) {
    const std::size_t n = config.sweep[i];
    AssignmentRecord& a = report.assignments[i];
    a.n_devices = n;
    ChannelConfig channel = config.channel;
    channel.n_devices = n;
    try {
      a.result = run_long_term(channel, config.energy.for_devices(n), long_term,
                               derive_seed(derive_seed(config.seed, kSweepStream + n), 0));
    } catch (const Error& e) {
      a.ok = false;
      a.error = e.what();
    }
  });

  std::vector<Calibration> cal(n_sweep);
  for (std::size_t i = 0; i < n_sweep; ++i)
    if (report.assignments[i].ok)
      cal[i] = Calibration::from_rms(partial_rms_profile(in.model, in.calibration, report.assignments[i].result.m),
                                     config.baselines.clip_mult);

  std::vector<std::vector<RoundOutcome>> outcomes(n_sweep * rounds);
  parallel_for(n_sweep * rounds, [&](std::size_t job) {
    const std::size_t i = job / rounds;
    const std::size_t r = job % rounds;
    if (!report.assignments[i].ok) return;
    const std::size_t n = config.sweep[i];
    const std::uint64_t round_seed = derive_seed(derive_seed(derive_seed(config.seed, kSweepStream + n), 1), r);
    outcomes[job] = run_round(config, in, n, report.assignments[i].result.m, cal[i], round_seed);
  });

  for (std::size_t i = 0; i < n_sweep; ++i) {
    const AssignmentRecord& a = report.assignments[i];
    for (std::size_t s = 0; s < n_schemes; ++s) {
      CellResult cell;
      cell.scheme = config.schemes[s];
      cell.n_devices = a.n_devices;
      if (!a.ok) {
        cell.ok = false;
        cell.error = "model assignment failed: " + a.error;
        cell.failed_rounds = rounds;
        report.cells.push_back(std::move(cell));
        continue;
      }
      cell.m = a.result.m;
      for (std::size_t r = 0; r < rounds; ++r) {
        const RoundOutcome& o = outcomes[i * rounds + r][s];
        if (!o.ok) {
          if (cell.error.empty()) cell.error = "round " + std::to_string(r) + ": " + o.error;
          ++cell.failed_rounds;
          continue;
        }
        cell.mse.push_back(o.mse);
        cell.mse_measured.push_back(o.mse_measured);
        cell.perplexities.push_back(o.perplexity);
      }
      cell.ok = cell.failed_rounds < rounds;
      cell.mse_mean = mean_of(cell.mse);
      cell.mse_std = std_of(cell.mse);
      cell.perplexity_median = median_of(cell.perplexities);
      cell.comm_latency_s = comm_latency(cell.scheme, a.n_devices, config.baselines.latency);
      cell.token_latency_s = token_latency(cell.scheme, cell.m, config.baselines.latency);
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

std::string sweep_csv(const ExperimentReport& report) {
  std::string out = "scheme,n_devices,mse_mean,mse_std,perplexity,comm_latency_s,token_latency_s,seed\n";
  for (const CellResult& c : report.cells) {
    out += scheme_name(c.scheme) + "," + std::to_string(c.n_devices) + ",";
    if (c.ok)
      out += fmt(c.mse_mean) + "," + fmt(c.mse_std) + "," + fmt(c.perplexity_median) + "," + fmt(c.comm_latency_s) +
             "," + fmt(c.token_latency_s);
    else
      out += ",,,,";
    out += "," + std::to_string(report.config.seed) + "\n";
  }
  return out;
}

std::string trace_csv(const LongTermResult& result, std::size_t n_devices) {
  std::string out = "tau";
  for (std::size_t j = 1; j <= n_devices; ++j) out += ",m_" + std::to_string(j);
  out += ",sampled_mse,u0_norm,step_gamma\n";
  for (const LongTermTraceRow& row : result.trace) {
    out += std::to_string(row.tau);
    for (std::size_t j = 0; j < n_devices; ++j) out += "," + (j < row.m.size() ? fmt(row.m[j]) : std::string());
    out += "," + fmt(row.sampled_mse) + "," + fmt(row.u0_norm) + "," + fmt(row.step_gamma) + "\n";
  }
  return out;
}

std::string sweep_trace_csv(const ExperimentReport& report) {
  std::size_t width = 0;
  for (const auto& a : report.assignments) width = std::max(width, a.n_devices);
  std::string out;
  bool header = true;
  for (const auto& a : report.assignments) {
    const std::string t = trace_csv(a.result, width);
    const std::size_t eol = t.find('\n');
    if (header) {
      out += "n_devices," + t.substr(0, eol + 1);
      header = false;
    }
    for (std::size_t pos = eol + 1; pos < t.size();) {
      const std::size_t next = t.find('\n', pos);
      out += std::to_string(a.n_devices) + "," + t.substr(pos, next - pos + 1);
      pos = next + 1;
    }
  }
  return out;
}

std::string report_json(const ExperimentReport& report) {
  using nlohmann::json;
  json j;
  j["build"] = build_stamp();
  j["config"] = json::parse(config_to_json(report.config));
  j["assignments"] = json::array();
  for (const auto& a : report.assignments) {
    json r = {{"n_devices", a.n_devices}, {"ok", a.ok}};
    if (a.ok) {
      r["m"] = a.result.m;
      r["iterations"] = a.result.trace.size();
      r["converged"] = a.result.converged;
      r["skipped_samples"] = a.result.skipped_samples;
    } else {
      r["error"] = a.error;
    }
    j["assignments"].push_back(std::move(r));
  }
  j["cells"] = json::array();
  for (const auto& c : report.cells) {
    json r = {{"scheme", scheme_name(c.scheme)}, {"n_devices", c.n_devices}, {"ok", c.ok},
              {"failed_rounds", c.failed_rounds}};
    if (!c.error.empty()) r["error"] = c.error;
    if (c.ok) {
      r["mse_mean"] = c.mse_mean;
      r["mse_std"] = c.mse_std;
      r["mse_measured_mean"] = mean_of(c.mse_measured);
      r["perplexity_median"] = c.perplexity_median;
      r["perplexity_mean"] = mean_of(c.perplexities);
      r["mse_rounds"] = c.mse;
      r["perplexity_rounds"] = c.perplexities;
      r["comm_latency_s"] = c.comm_latency_s;
      r["token_latency_s"] = c.token_latency_s;
      r["m"] = c.m;
    }
    j["cells"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto put = [&](const char* name, const std::string& text) {
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + (std::filesystem::path(dir) / name).string());
    f << text;
  };
  put("report.json", report_json(report));
  put("sweep.csv", sweep_csv(report));
  put("sca_trace.csv", sweep_trace_csv(report));
}

const char* build_stamp() { return AIRTP_BUILD_STAMP; }

}  // namespace airtp
