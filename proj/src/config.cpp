#include "airtp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

namespace airtp {

namespace {

using json = nlohmann::json;

// Reads typed fields out of one JSON object and rejects leftovers.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
        if (!it->is_array()) throw ConfigError("");
        for (const auto& v : *it)
          if (!v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "." + key + " has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown key '" + sub(key.c_str()) + "'");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

cplx read_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError(path + " must be a number or a [re, im] pair");
}

void read_channel(const json& j, ChannelConfig& c) {
  Section s(j, "channel");
  s.get("n_devices", c.n_devices);
  s.get("n_rx", c.n_rx);
  s.get("n_tx", c.n_tx);
  if (const json* mu = s.child("rician_mean")) c.rician_mean = read_complex(*mu, "channel.rician_mean");
  s.get("variance", c.variance);
  s.get("noise_power", c.noise_power);
  s.finish();
}

void read_energy(const json& j, EnergyConfig& e) {
  Section s(j, "energy");
  s.get("energy_coefficient", e.energy_coefficient);
  s.get("energy_coefficients", e.energy_coefficients);
  s.get("weights_per_layer", e.weights_per_layer);
  s.get("power_budget", e.power_budget);
  s.get("payload_total", e.payload_total);
  s.get("payload_per_round", e.payload_per_round);
  s.finish();
}

void read_model(const json& j, TransformerConfig& m) {
  Section s(j, "model");
  s.get("d_model", m.d_model);
  s.get("d_ff", m.d_ff);
  s.get("num_heads", m.num_heads);
  s.get("num_layers", m.num_layers);
  s.get("vocab_size", m.vocab_size);
  s.get("seq_len", m.seq_len);
  s.finish();
}

void read_short_term(const json& j, ShortTermOptions& o) {
  Section s(j, "short_term");
  s.get("rand_trials", o.rand_trials);
  s.get("sdp_max_iters", o.sdp.max_iters);
  s.get("sdp_tolerance", o.sdp.tolerance);
  s.finish();
}

void read_long_term(const json& j, LongTermOptions& o) {
  Section s(j, "long_term");
  s.get("rho_exponent", o.schedule.rho_exponent);
  s.get("gamma_exponent", o.schedule.gamma_exponent);
  s.get("eta0", o.eta0);
  s.get("eta1", o.eta1);
  s.get("max_iters", o.max_iters);
  s.get("window", o.window);
  s.get("move_tolerance", o.move_tolerance);
  s.get("max_skipped", o.max_skipped);
  s.finish();
}

void read_baselines(const json& j, BaselineConfig& b) {
  Section s(j, "baselines");
  s.get("quant_bits", b.latency.quant_bits);
  s.get("clip_mult", b.clip_mult);
  s.get("bits_per_symbol", b.latency.bits_per_symbol);
  s.get("compute_rate", b.latency.compute_rate);
  s.get("bandwidth_hz", b.latency.bandwidth_hz);
  s.get("payload_symbols", b.latency.payload_symbols);
  s.get("reduces_per_token", b.latency.reduces_per_token);
  s.get("model_weights", b.latency.model_weights);
  s.finish();
}

}  // namespace

EnergyModel EnergyConfig::for_devices(std::size_t n) const {
  EnergyModel m = EnergyModel::uniform(n, energy_coefficient, weights_per_layer, power_budget, payload_total,
                                       payload_per_round);
  if (!energy_coefficients.empty()) {
    if (energy_coefficients.size() < n)
      throw ConfigError("energy.energy_coefficients has " + std::to_string(energy_coefficients.size()) +
                        " entries but " + std::to_string(n) + " devices are requested");
    m.energy_coefficients.assign(energy_coefficients.begin(), energy_coefficients.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return m;
}

void ExperimentConfig::validate() const {
  channel.validate();
  model.validate();
  long_term.schedule.validate();
  baselines.latency.validate();
  if (!(baselines.clip_mult > 0.0)) throw ConfigError("baselines.clip_mult must be > 0");
  if (baselines.latency.quant_bits > 52) throw ConfigError("baselines.quant_bits must be <= 52");
  if (short_term.rand_trials < 1) throw ConfigError("short_term.rand_trials must be >= 1");
  if (short_term.sdp.max_iters < 1) throw ConfigError("short_term.sdp_max_iters must be >= 1");
  if (!(short_term.sdp.tolerance > 0.0)) throw ConfigError("short_term.sdp_tolerance must be > 0");
  if (!(long_term.eta0 > 0.0) || !(long_term.eta1 > 0.0)) throw ConfigError("long_term.eta0 and eta1 must be > 0");
  if (long_term.max_iters < 1) throw ConfigError("long_term.max_iters must be >= 1");
  if (long_term.window < 1) throw ConfigError("long_term.window must be >= 1");
  if (long_term.max_skipped < 1) throw ConfigError("long_term.max_skipped must be >= 1");
  if (sweep.empty()) throw ConfigError("sweep must list at least one device count");
  for (std::size_t n : sweep)
    if (n < 1) throw ConfigError("sweep entries must be >= 1");
  if (schemes.empty()) throw ConfigError("schemes must not be empty");
  if (monte_carlo_rounds < 1) throw ConfigError("monte_carlo_rounds must be >= 1");
  if (rounds_per_block < 1) throw ConfigError("rounds_per_block must be >= 1");
  const std::size_t l = energy.payload_per_round;
  if (l > channel.n_tx || l > channel.n_rx)
    throw ConfigError("energy.payload_per_round must not exceed channel.n_tx or channel.n_rx");
  std::vector<std::size_t> counts = sweep;
  counts.push_back(channel.n_devices);
  for (std::size_t n : counts) energy.for_devices(n).validate(n);
}

void ExperimentConfig::check_feasible() const {
  std::vector<std::size_t> counts = sweep;
  counts.push_back(channel.n_devices);
  for (std::size_t n : counts) {
    const std::vector<double> m(n, 1.0 / static_cast<double>(n));
    try {
      residual_power(m, energy.for_devices(n));
    } catch (const InfeasibleAssignmentError& e) {
      throw InfeasibleError("uniform assignment over " + std::to_string(n) + " devices: " + e.what());
    }
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section s(j, "");
  if (const json* v = s.child("channel")) read_channel(*v, c.channel);
  if (const json* v = s.child("energy")) read_energy(*v, c.energy);
  if (const json* v = s.child("model")) read_model(*v, c.model);
  if (const json* v = s.child("short_term")) read_short_term(*v, c.short_term);
  if (const json* v = s.child("long_term")) read_long_term(*v, c.long_term);
  if (const json* v = s.child("baselines")) read_baselines(*v, c.baselines);
  s.get("sweep", c.sweep);
  if (const json* v = s.child("schemes")) {
    if (!v->is_array()) throw ConfigError("schemes must be an array of names");
    c.schemes.clear();
    for (const auto& name : *v) {
      if (!name.is_string()) throw ConfigError("schemes must be an array of names");
      const Scheme sc = parse_scheme(name.get<std::string>());
      for (Scheme seen : c.schemes)
        if (seen == sc) throw ConfigError("scheme '" + name.get<std::string>() + "' listed twice");
      c.schemes.push_back(sc);
    }
  }
  s.get("monte_carlo_rounds", c.monte_carlo_rounds);
  s.get("rounds_per_block", c.rounds_per_block);
  s.get("seed", c.seed);
  s.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["channel"] = {{"n_devices", c.channel.n_devices},
                  {"n_rx", c.channel.n_rx},
                  {"n_tx", c.channel.n_tx},
                  {"rician_mean", {c.channel.rician_mean.real(), c.channel.rician_mean.imag()}},
                  {"variance", c.channel.variance},
                  {"noise_power", c.channel.noise_power}};
  j["energy"] = {{"energy_coefficient", c.energy.energy_coefficient},
                 {"energy_coefficients", c.energy.energy_coefficients},
                 {"weights_per_layer", c.energy.weights_per_layer},
                 {"power_budget", c.energy.power_budget},
                 {"payload_total", c.energy.payload_total},
                 {"payload_per_round", c.energy.payload_per_round}};
  j["model"] = {{"d_model", c.model.d_model},       {"d_ff", c.model.d_ff},
                {"num_heads", c.model.num_heads},   {"num_layers", c.model.num_layers},
                {"vocab_size", c.model.vocab_size}, {"seq_len", c.model.seq_len}};
  j["short_term"] = {{"rand_trials", c.short_term.rand_trials},
                     {"sdp_max_iters", c.short_term.sdp.max_iters},
                     {"sdp_tolerance", c.short_term.sdp.tolerance}};
  j["long_term"] = {{"rho_exponent", c.long_term.schedule.rho_exponent},
                    {"gamma_exponent", c.long_term.schedule.gamma_exponent},
                    {"eta0", c.long_term.eta0},
                    {"eta1", c.long_term.eta1},
                    {"max_iters", c.long_term.max_iters},
                    {"window", c.long_term.window},
                    {"move_tolerance", c.long_term.move_tolerance},
                    {"max_skipped", c.long_term.max_skipped}};
  const LatencyModel& lm = c.baselines.latency;
  j["baselines"] = {{"quant_bits", lm.quant_bits},
                    {"clip_mult", c.baselines.clip_mult},
                    {"bits_per_symbol", lm.bits_per_symbol},
                    {"compute_rate", lm.compute_rate},
                    {"bandwidth_hz", lm.bandwidth_hz},
                    {"payload_symbols", lm.payload_symbols},
                    {"reduces_per_token", lm.reduces_per_token},
                    {"model_weights", lm.model_weights}};
  j["sweep"] = c.sweep;
  std::vector<std::string> names;
  for (Scheme s : c.schemes) names.push_back(scheme_name(s));
  j["schemes"] = names;
  j["monte_carlo_rounds"] = c.monte_carlo_rounds;
  j["rounds_per_block"] = c.rounds_per_block;
  j["seed"] = c.seed;
  return j.dump(2);
}

}  // namespace airtp
