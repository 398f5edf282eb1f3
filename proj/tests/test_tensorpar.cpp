#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "airtp/channel.hpp"
#include "airtp/reducers.hpp"
#include "airtp/short_term.hpp"
#include "airtp/tensorpar.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace airtp;

namespace {

TransformerConfig small_config() {
  TransformerConfig c;
  c.d_model = 16;
  c.d_ff = 24;
  c.num_heads = 4;
  c.num_layers = 2;
  c.vocab_size = 20;
  c.seq_len = 6;
  return c;
}

std::vector<std::size_t> tokens(const TransformerConfig& c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<std::size_t> t(c.seq_len);
  for (auto& v : t) v = gen() % c.vocab_size;
  return t;
}

double rel_error(const RealMatrix& a, const RealMatrix& b) { return oracle::frob_diff(a, b) / oracle::frob(b); }

RealMatrix relu_mlp(const RealMatrix& x, const RealMatrix& w, const RealMatrix& u) {
  RealMatrix h = oracle::matmul(x, w);
  for (double& v : h.values()) v = std::max(v, 0.0);
  return oracle::matmul(h, u);
}

// Adds independent Gaussian noise of the given variance to every entry.
class NoisyReducer final : public Reducer {
 public:
  NoisyReducer(double variance, std::uint64_t seed) : variance_(variance), seed_(seed) {}
  RealMatrix reduce(std::span<const RealMatrix> partials, std::size_t call) const override {
    RealMatrix out = sum_partials(partials);
    std::mt19937_64 gen(seed_ * 1000 + call);
    std::normal_distribution<double> nd(0.0, std::sqrt(variance_));
    for (double& v : out.values()) v += nd(gen);
    return out;
  }

 private:
  double variance_;
  std::uint64_t seed_;
};

}  // namespace

TEST_CASE("largest_remainder: examples and total") {
  const std::vector<double> one{1.0}, half{0.5, 0.5}, skew{0.75, 0.25}, third{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(largest_remainder(one, 7) == std::vector<std::size_t>{7});
  CHECK(largest_remainder(half, 4) == std::vector<std::size_t>{2, 2});
  CHECK(largest_remainder(skew, 4) == std::vector<std::size_t>{3, 1});
  CHECK(largest_remainder(third, 4) == std::vector<std::size_t>{2, 1, 1});
  std::mt19937_64 gen(61);
  std::exponential_distribution<double> ex(1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> m(1 + trial % 7);
    double s = 0.0;
    for (double& v : m) s += (v = ex(gen));
    for (double& v : m) v /= s;
    const std::size_t total = 1 + trial % 37;
    const auto k = largest_remainder(m, total);
    REQUIRE(std::accumulate(k.begin(), k.end(), std::size_t{0}) == total);
    for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(std::abs(static_cast<double>(k[i]) - m[i] * total) < 1.0);
  }
}

TEST_CASE("partition_mlp: shards reassemble W and U exactly") {
  std::mt19937_64 gen(62);
  const RealMatrix w = oracle::random_real(8, 12, gen);
  const RealMatrix u = oracle::random_real(12, 8, gen);
  const std::vector<double> m{0.5, 0.0, 0.2, 0.3};
  const ShardedLayer s = partition_mlp(w, u, m);
  CHECK(s.shard_sizes == std::vector<std::size_t>{6, 0, 2, 4});
  std::size_t col = 0;
  for (const MlpShard& shard : s.mlp) {
    CHECK(shard.w.cols() == shard.u.rows());
    for (std::size_t j = 0; j < shard.w.cols(); ++j, ++col)
      for (std::size_t i = 0; i < 8; ++i) {
        REQUIRE(shard.w(i, j) == w(i, col));
        REQUIRE(shard.u(j, i) == u(col, i));
      }
  }
  CHECK(col == 12);

  const std::vector<double> single{1.0};
  const ShardedLayer whole = partition_mlp(w, u, single);
  CHECK(whole.mlp[0].w == w);
  CHECK(whole.mlp[0].u == u);
}

TEST_CASE("partition_layer: heads are a disjoint cover") {
  const TransformerModel model = make_model(small_config(), 1);
  const std::vector<double> m{0.1, 0.6, 0.3};
  const ShardedLayer s = partition_layer(model.layers[0], 4, m);
  std::vector<int> seen(4, 0);
  for (const auto& hs : s.heads)
    for (std::size_t h : hs) ++seen[h];
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("device_forward_mlp: zero input, empty shard and the centralised sum") {
  std::mt19937_64 gen(63);
  const RealMatrix w = oracle::random_real(8, 10, gen);
  const RealMatrix u = oracle::random_real(10, 8, gen);
  const std::vector<double> m{0.45, 0.0, 0.55};
  const ShardedLayer s = partition_mlp(w, u, m);
  const RealMatrix zero(5, 8);
  for (const auto& shard : s.mlp) CHECK(device_forward_mlp(zero, shard) == RealMatrix(5, 8));
  const RealMatrix x = oracle::random_real(5, 8, gen);
  CHECK(device_forward_mlp(x, s.mlp[1]) == RealMatrix(5, 8));

  std::vector<RealMatrix> parts;
  for (const auto& shard : s.mlp) parts.push_back(device_forward_mlp(x, shard));
  CHECK(rel_error(sum_partials(parts), relu_mlp(x, w, u)) < 1e-10);
  CHECK_THROWS_AS(device_forward_mlp(oracle::random_real(5, 7, gen), s.mlp[0]), DimensionError);
}

TEST_CASE("all_reduce: exact reducer") {
  std::mt19937_64 gen(64);
  const RealMatrix a = oracle::random_real(3, 4, gen);
  const std::vector<RealMatrix> parts{a, a * -1.0};
  CHECK(all_reduce(parts, ExactReducer{}) == RealMatrix(3, 4));
  const std::vector<RealMatrix> ragged{a, RealMatrix(4, 3)};
  CHECK_THROWS_AS(all_reduce(ragged, ExactReducer{}), DimensionError);
}

TEST_CASE("forward_pass: assignment invariance under exact reduction") {
  std::mt19937_64 gen(65);
  for (int trial = 0; trial < 10; ++trial) {
    TransformerConfig cfg = small_config();
    cfg.num_layers = 1 + trial % 3;
    const TransformerModel model = make_model(cfg, 100 + trial);
    const RealMatrix x = embed(model, tokens(cfg, trial));
    const RealMatrix ref = centralized_forward(model, x);
    std::vector<double> m(1 + trial % 6);
    std::exponential_distribution<double> ex(1.0);
    double s = 0.0;
    for (double& v : m) s += (v = ex(gen));
    for (double& v : m) v /= s;
    if (m.size() > 2) {  // force an empty shard
      m[1] += m[0];
      m[0] = 0.0;
    }
    CHECK(rel_error(forward_pass(model, x, m, ExactReducer{}), ref) < 1e-5);
  }
}

TEST_CASE("forward_pass: no layers is the output head on the input") {
  TransformerConfig cfg = small_config();
  cfg.num_layers = 0;
  const TransformerModel model = make_model(cfg, 3);
  const RealMatrix x = embed(model, tokens(cfg, 1));
  const std::vector<double> m{0.5, 0.5};
  CHECK(rel_error(forward_pass(model, x, m, ExactReducer{}), oracle::matmul(layer_norm(x), model.head)) < 1e-12);
}

TEST_CASE("forward_pass: output error grows with injected reducer noise") {
  const TransformerModel model = make_model(small_config(), 4);
  const RealMatrix x = embed(model, tokens(small_config(), 2));
  const RealMatrix ref = centralized_forward(model, x);
  const std::vector<double> m{0.25, 0.25, 0.5};
  std::vector<double> medians;
  for (double v : {0.0, 0.1, 1.0}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
      errs.push_back(rel_error(forward_pass(model, x, m, NoisyReducer(v, seed)), ref));
    std::sort(errs.begin(), errs.end());
    medians.push_back(errs[1]);
  }
  CHECK(medians[0] <= medians[1]);
  CHECK(medians[1] <= medians[2]);

  // Roughly linear in the injected variance while the noise is small.
  std::vector<double> lv, le;
  for (double v : {1e-4, 1e-3, 1e-2, 1e-1}) {
    double e = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const double r = oracle::frob_diff(forward_pass(model, x, m, NoisyReducer(v, seed)), ref);
      e += r * r;
    }
    lv.push_back(std::log10(v));
    le.push_back(std::log10(e / 5.0));
  }
  const auto fit = oracle::fit_line(lv, le);
  CHECK(std::abs(fit.slope - 1.0) < 0.2);
}

TEST_CASE("air reducer: noiseless ZF equals the exact sum; noisy error matches the closed form") {
  ChannelConfig ch;
  ch.n_devices = 3;
  ch.n_rx = 8;
  ch.n_tx = 2;
  const std::vector<ChannelSet> blocks{sample_channels(ch, 5)};
  const EnergyModel em = EnergyModel::uniform(3, 5e-4, 1000.0, 1.0, 4, 1);
  const std::vector<double> m(3, 1.0 / 3.0);
  const ShortTermResult st = solve_short_term(blocks[0], m, em, ShortTermOptions{}, 1);
  const std::vector<TransceiverDesign> designs{st.design};

  std::mt19937_64 gen(66);
  std::vector<RealMatrix> parts;
  for (int n = 0; n < 3; ++n) parts.push_back(oracle::random_real(4, 6, gen));
  const RealMatrix exact = sum_partials(parts);

  const AirReducer silent(blocks, designs, 1000000, std::vector<double>(1, 1.0), 0.0, 1);
  CHECK(oracle::frob_diff(silent.reduce(parts, 0), exact) < 1e-8 * oracle::frob(exact));

  // Per complex symbol the error power is mse_closed_form / L (L = 1 here).
  const std::size_t calls = 10000;
  const double scale = 0.7;
  const AirReducer noisy(blocks, designs, calls, std::vector<double>(calls, scale), 1.0, 2);
  double err = 0.0;
  for (std::size_t k = 0; k < calls; ++k) {
    const RealMatrix y = noisy.reduce(parts, k);
    for (std::size_t i = 0; i < y.size(); ++i) err += std::pow(y.data()[i] - exact.data()[i], 2);
  }
  const double per_symbol = err / (scale * scale) / (static_cast<double>(calls) * exact.size() / 2.0);
  CHECK(oracle::rel_diff(per_symbol, mse_closed_form(st.design, blocks[0], 1.0)) < 0.05);
}

TEST_CASE("partial_rms_profile and calibration") {
  const TransformerModel model = make_model(small_config(), 5);
  const RealMatrix x = embed(model, tokens(small_config(), 3));
  const std::vector<double> m{0.5, 0.5, 0.0};
  const RealMatrix rms = partial_rms_profile(model, x, m);
  CHECK(rms.rows() == model.config.reduces_per_pass());
  CHECK(rms.cols() == 3);
  for (std::size_t call = 0; call < rms.rows(); ++call) {
    CHECK(rms(call, 0) > 0.0);
    CHECK(rms(call, 2) == 0.0);  // empty shard, no heads
  }
  const Calibration cal = Calibration::from_rms(rms, 4.0);
  for (std::size_t call = 0; call < rms.rows(); ++call) {
    const double pooled = std::sqrt((rms(call, 0) * rms(call, 0) + rms(call, 1) * rms(call, 1)) / 3.0);
    CHECK(cal.scale[call] == doctest::Approx(std::sqrt(2.0) * pooled));
    CHECK(cal.clip[call][1] == doctest::Approx(4.0 * rms(call, 1)));
    CHECK(cal.clip[call][2] == 0.0);
  }
}

TEST_CASE("layer_norm, log_softmax and argmax_rows") {
  const RealMatrix x{{1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}};
  const RealMatrix n = layer_norm(x);
  double mean = (n(0, 0) + n(0, 1) + n(0, 2)) / 3.0;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(n(1, 0) == 0.0);
  const RealMatrix lp = log_softmax(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(lp(r, c));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(lp(1, 0) == doctest::Approx(std::log(1.0 / 3.0)));
  CHECK(argmax_rows(x) == std::vector<std::size_t>{2, 0});
}

TEST_CASE("config and input validation") {
  TransformerConfig bad = small_config();
  bad.num_heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  const TransformerModel model = make_model(small_config(), 6);
  std::vector<std::size_t> t = tokens(small_config(), 1);
  t[0] = 1000;
  CHECK_THROWS_AS(embed(model, t), DomainError);
  const RealMatrix x = embed(model, tokens(small_config(), 1));
  const std::vector<double> off{0.7, 0.7};
  CHECK_THROWS_AS(forward_pass(model, x, off, ExactReducer{}), DomainError);
  CHECK(make_model(small_config(), 9).head == make_model(small_config(), 9).head);
}
