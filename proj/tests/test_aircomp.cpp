#include <random>

#include "airtp/aircomp.hpp"
#include "airtp/channel.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace airtp;

namespace {

ChannelSet random_channels(std::size_t n, std::size_t rx, std::size_t tx, std::mt19937_64& gen) {
  ChannelSet s;
  for (std::size_t i = 0; i < n; ++i) s.matrices.push_back(oracle::random_complex(rx, tx, gen, 1.0));
  return s;
}

TransceiverDesign zf_design(const ComplexMatrix& a, const ChannelSet& h) { return {a, zero_forcing_precoders(a, h)}; }

// s_hat = A^H (sum_n H_n B_n s_n + w), evaluated entry by entry.
std::vector<cplx> direct_receive(const TransceiverDesign& d, const ChannelSet& h,
                                 const std::vector<std::vector<cplx>>& s, const std::vector<cplx>& w) {
  const std::size_t rx = d.a.rows(), l = d.a.cols();
  std::vector<cplx> y(w);
  for (std::size_t n = 0; n < h.size(); ++n)
    for (std::size_t r = 0; r < rx; ++r)
      for (std::size_t t = 0; t < h[n].cols(); ++t)
        for (std::size_t k = 0; k < l; ++k) y[r] += h[n](r, t) * d.b[n](t, k) * s[n][k];
  std::vector<cplx> out(l);
  for (std::size_t k = 0; k < l; ++k)
    for (std::size_t r = 0; r < rx; ++r) out[k] += std::conj(d.a(r, k)) * y[r];
  return out;
}

double gram_trace(const ComplexMatrix& a) {
  double s = 0.0;
  for (const cplx v : a.values()) s += std::norm(v);
  return s;
}

}  // namespace

TEST_CASE("zero_forcing_precoders: scalar and identity channels") {
  const ChannelSet scalar{{ComplexMatrix{{2.0}}}};
  const auto b = zero_forcing_precoders(ComplexMatrix{{1.0}}, scalar);
  CHECK(std::abs(b[0](0, 0) - cplx(0.5, 0.0)) < 1e-15);

  const ComplexMatrix a = ComplexMatrix::identity(4).columns(0, 2);
  const auto bi = zero_forcing_precoders(a, ChannelSet{{ComplexMatrix::identity(4), ComplexMatrix::identity(4)}});
  for (const auto& bn : bi) CHECK(oracle::frob_diff(bn, a) < 1e-15);
}

TEST_CASE("zero_forcing_precoders: A^H H_n B_n = I on random instances") {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 20; ++trial) {
    const ChannelSet h = random_channels(3, 20, 4, gen);
    const ComplexMatrix a = oracle::random_complex(20, 4, gen);
    const auto b = zero_forcing_precoders(a, h);
    for (std::size_t n = 0; n < h.size(); ++n) {
      const ComplexMatrix e = oracle::matmul(oracle::herm(a), oracle::matmul(h[n], b[n]));
      CHECK(oracle::frob_diff(e, ComplexMatrix::identity(4)) < 1e-8);
    }
  }
}

TEST_CASE("zero_forcing_precoders: rank-deficient effective channel is refused") {
  // A orthogonal to the channel's column space.
  const ComplexMatrix h{{1.0}, {0.0}};
  const ComplexMatrix a{{0.0}, {1.0}};
  CHECK_THROWS_AS(zero_forcing_precoders(a, ChannelSet{{h}}), IllConditionedChannelError);
  try {
    zero_forcing_precoders(a, ChannelSet{{ComplexMatrix{{0.0}, {1.0}}, h}});
  } catch (const IllConditionedChannelError& e) {
    CHECK(e.device() == 1);
  }
}

TEST_CASE("transmit_round: scalar chain, noiseless ZF and a direct re-evaluation") {
  const TransceiverDesign unit{ComplexMatrix{{1.0}}, {ComplexMatrix{{1.0}}}};
  const ChannelSet one{{ComplexMatrix{{1.0}}}};
  const auto y = transmit_round(PayloadBlock{{{cplx(0.3, -1.0)}}, 1}, unit, one, std::vector<cplx>{cplx(0.1, 0.2)});
  CHECK(std::abs(y[0] - cplx(0.4, -0.8)) < 1e-15);

  std::mt19937_64 gen(22);
  const ChannelSet h = random_channels(4, 20, 4, gen);
  const TransceiverDesign d = zf_design(oracle::random_complex(20, 2, gen), h);
  std::vector<std::vector<cplx>> s;
  std::vector<cplx> total(2);
  for (std::size_t n = 0; n < 4; ++n) {
    const ComplexMatrix v = oracle::random_complex(2, 1, gen);
    s.push_back({v(0, 0), v(1, 0)});
    total[0] += v(0, 0);
    total[1] += v(1, 0);
  }
  const std::vector<cplx> zero(20);
  const auto clean = transmit_round(PayloadBlock{s, 4}, d, h, zero);
  for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(clean[k] - total[k]) < 1e-8);

  // Arbitrary (non-ZF) precoders with noise.
  TransceiverDesign arb{oracle::random_complex(20, 2, gen), {}};
  for (std::size_t n = 0; n < 4; ++n) arb.b.push_back(oracle::random_complex(4, 2, gen));
  const ComplexMatrix wm = oracle::random_complex(20, 1, gen);
  std::vector<cplx> w(wm.values().begin(), wm.values().end());
  const auto got = transmit_round(PayloadBlock{s, 4}, arb, h, w);
  const auto want = direct_receive(arb, h, s, w);
  for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(got[k] - want[k]) < 1e-10 * (1.0 + std::abs(want[k])));
}

TEST_CASE("transmit_round: shape errors") {
  const TransceiverDesign unit{ComplexMatrix{{1.0}}, {ComplexMatrix{{1.0}}}};
  const ChannelSet one{{ComplexMatrix{{1.0}}}};
  CHECK_THROWS_AS(transmit_round(PayloadBlock{{{1.0}}, 1}, unit, one, std::vector<cplx>(2)), DimensionError);
  CHECK_THROWS_AS(transmit_round(PayloadBlock{{{1.0, 2.0}}, 2}, unit, one, std::vector<cplx>(1)), DimensionError);
}

TEST_CASE("mse_closed_form: ZF identity, zero design and scaling law") {
  std::mt19937_64 gen(23);
  const ChannelSet h = random_channels(3, 20, 4, gen);
  const ComplexMatrix a = oracle::random_complex(20, 4, gen);
  const TransceiverDesign d = zf_design(a, h);
  CHECK(oracle::rel_diff(mse_closed_form(d, h, 0.7), 0.7 * gram_trace(a)) < 1e-10);

  TransceiverDesign zero{ComplexMatrix(20, 4), std::vector<ComplexMatrix>(3, ComplexMatrix(4, 4))};
  CHECK(mse_closed_form(zero, h, 1.0) == doctest::Approx(3.0 * 4.0));

  // A = sqrt(alpha) G with tr(G G^H) = 1 gives sigma^2 alpha.
  const ComplexMatrix g = a * cplx(1.0 / std::sqrt(gram_trace(a)), 0.0);
  const double alpha = 2.5;
  const TransceiverDesign scaled = zf_design(g * cplx(std::sqrt(alpha), 0.0), h);
  CHECK(oracle::rel_diff(mse_closed_form(scaled, h, 1.3), 1.3 * alpha) < 1e-10);
}

TEST_CASE("mse_empirical: noiseless ZF, scalar chain and closed-form agreement") {
  std::mt19937_64 gen(24);
  const ChannelSet h = random_channels(2, 8, 2, gen);
  const TransceiverDesign d = zf_design(oracle::random_complex(8, 2, gen), h);
  CHECK(mse_empirical(d, h, 0.0, 100, 1) < 1e-12);

  // Scalar chain: the error is the noise alone, mean 1 and variance 1 per trial.
  const TransceiverDesign unit{ComplexMatrix{{1.0}}, {ComplexMatrix{{1.0}}}};
  const double e = mse_empirical(unit, ChannelSet{{ComplexMatrix{{1.0}}}}, 1.0, 40000, 5);
  CHECK(std::abs(e - 1.0) < 3.0 / std::sqrt(40000.0));

  TransceiverDesign arb{oracle::random_complex(8, 2, gen), {}};
  for (std::size_t n = 0; n < 2; ++n) arb.b.push_back(oracle::random_complex(2, 2, gen) * cplx(0.3, 0.0));
  for (auto dist : {SymbolDistribution::complex_gaussian, SymbolDistribution::qpsk}) {
    CHECK(oracle::rel_diff(mse_empirical(arb, h, 1.0, 100000, 6, dist), mse_closed_form(arb, h, 1.0)) < 0.02);
    CHECK(oracle::rel_diff(mse_empirical(d, h, 1.0, 100000, 7, dist), mse_closed_form(d, h, 1.0)) < 0.02);
  }
  CHECK(mse_empirical(arb, h, 1.0, 5000, 8) == mse_empirical(arb, h, 1.0, 5000, 8));
}

TEST_CASE("precoder_energy and real-pair packing") {
  const ComplexMatrix b{{cplx(1.0, 1.0), 0.0}, {0.0, 2.0}};
  CHECK(precoder_energy(b, 8) == doctest::Approx(8.0 / 2.0 * 6.0));

  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto s = pack_real_pairs(v);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == cplx(1.0, 2.0));
  CHECK(s[1] == cplx(3.0, 0.0));
  CHECK(unpack_real_pairs(s, 3) == v);
  CHECK_THROWS_AS(unpack_real_pairs(s, 5), DimensionError);
}
