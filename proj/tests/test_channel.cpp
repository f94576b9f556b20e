#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "rdp/channel.hpp"
#include "rdp/error.hpp"

using namespace rdp;
using namespace rdp::channel;

namespace {

std::vector<float> unit_power_stream(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> s(n);
  for (auto& v : s) v = g(rng);
  return power_normalize(s).symbols;
}

ChannelConfig cfg(Kind k, double snr, std::uint64_t seed = 1) {
  ChannelConfig c;
  c.kind = k;
  c.snr_db = snr;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Normalize, Examples) {
  const std::vector<float> twos{2, 2, 2, 2};
  auto n = power_normalize(twos);
  EXPECT_EQ(n.symbols, (std::vector<float>{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(n.scale, 2.0);
  const std::vector<float> ones{1, -1, 1, -1};
  n = power_normalize(ones);
  EXPECT_EQ(n.symbols, ones);
  EXPECT_DOUBLE_EQ(n.scale, 1.0);
  const std::vector<float> zeros(5, 0.0f);
  n = power_normalize(zeros);
  EXPECT_EQ(n.symbols, zeros);
  EXPECT_DOUBLE_EQ(n.scale, 1.0);
}

TEST(Normalize, RandomStreamHasUnitPower) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(-7.0f, 3.0f);
  for (int t = 0; t < 20; ++t) {
    std::vector<float> s(1001 + t);
    for (auto& v : s) v = u(rng);
    auto n = power_normalize(s);
    double p = 0.0;
    for (float v : n.symbols) p += static_cast<double>(v) * v;
    EXPECT_NEAR(p / static_cast<double>(s.size()), 1.0, 1e-6);
  }
}

TEST(Config, Validation) {
  EXPECT_THROW(cfg(Kind::awgn, std::nan("")).validate(), RejectedInput);
  EXPECT_THROW(cfg(Kind::awgn, -std::numeric_limits<double>::infinity()).validate(), RejectedInput);
  auto r = cfg(Kind::rayleigh, 10);
  r.equalization = Equalization::none;
  EXPECT_THROW(r.validate(), RejectedInput);
  EXPECT_DOUBLE_EQ(cfg(Kind::awgn, 10).noise_variance(), 0.1);
  EXPECT_EQ(cfg(Kind::awgn, ChannelConfig::noiseless).noise_variance(), 0.0);
}

TEST(Transmit, NoiselessIsExactIdentity) {
  const std::vector<float> s{0.3f, -12.0f, 7.25f, 1e-3f, 5.0f};
  for (auto k : {Kind::awgn, Kind::rayleigh}) {
    auto t = transmit(s, cfg(k, ChannelConfig::noiseless), 3);
    EXPECT_EQ(t.received, s);
  }
}

TEST(Transmit, OddLengthsPadOneSlot) {
  const std::vector<float> s{1, 2, 3};
  auto t = transmit(s, cfg(Kind::awgn, 10), 0);
  EXPECT_EQ(t.received.size(), 3u);
  EXPECT_EQ(t.realization.size(), 2u);
}

TEST(Transmit, Reproducible) {
  auto s = unit_power_stream(1000, 4);
  for (auto k : {Kind::awgn, Kind::rayleigh}) {
    auto a = transmit(s, cfg(k, 5, 9), 17);
    auto b = transmit(s, cfg(k, 5, 9), 17);
    EXPECT_EQ(a.received, b.received);
    auto c = transmit(s, cfg(k, 5, 9), 18);
    EXPECT_NE(a.received, c.received);
  }
}

TEST(Transmit, AwgnNoisePowerAtTenDb) {
  const std::size_t n = 1'000'000;
  auto s = unit_power_stream(n, 1);
  auto t = transmit(s, cfg(Kind::awgn, 10, 5), 0);
  EXPECT_DOUBLE_EQ(t.scale, power_normalize(s).scale);
  double p = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = (t.received[i] - s[i]) / t.scale;
    p += e * e;
  }
  EXPECT_NEAR(p / n, 0.1, 0.001);
  for (const auto& g : t.realization.gains) ASSERT_EQ(g, std::complex<double>(1.0, 0.0));
}

TEST(Transmit, RayleighZeroForcingIsUnbiased) {
  const std::size_t n = 1'000'000;
  auto s = unit_power_stream(n, 2);
  auto t = transmit(s, cfg(Kind::rayleigh, 10, 6), 0);
  // Per coordinate: even (real part) and odd (imaginary part) slots.
  for (int parity = 0; parity < 2; ++parity) {
    double sum = 0.0, sq = 0.0;
    std::size_t m = 0;
    for (std::size_t i = parity; i < n; i += 2) {
      const double e = t.received[i] - s[i];
      sum += e;
      sq += e * e;
      ++m;
    }
    const double mean = sum / m;
    const double se = std::sqrt((sq / m - mean * mean) / m);
    EXPECT_LT(std::abs(mean), 3 * se);
  }
}

TEST(Transmit, RayleighEffectiveNoiseVarianceByGainBin) {
  const std::size_t n = 2'000'000;
  auto s = unit_power_stream(n, 3);
  const auto c = cfg(Kind::rayleigh, 10, 7);
  auto t = transmit(s, c, 0);
  // Within a narrow |h| bin the slot noise variance is sigma^2 / |h|^2.
  const std::vector<double> edges{0.5, 0.6, 0.8, 1.0, 1.2, 1.5};
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    double sq = 0.0, expect = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double h = std::abs(t.realization.gains[i / 2]);
      if (h < edges[b] || h >= edges[b + 1]) continue;
      const double e = (t.received[i] - s[i]) / t.scale;
      sq += e * e;
      expect += c.noise_variance() / (h * h);
      ++m;
    }
    ASSERT_GT(m, 10000u);
    EXPECT_NEAR(sq / expect, 1.0, 0.05) << "bin " << edges[b];
  }
}

TEST(Transmit, GainsHaveUnitVariance) {
  auto r = draw_realization(500000, cfg(Kind::rayleigh, 10, 8), 0);
  double p = 0.0;
  for (const auto& h : r.gains) p += std::norm(h);
  EXPECT_NEAR(p / r.size(), 1.0, 0.01);
}

TEST(Transmit, SlicesMatchWholeStreamBitwise) {
  auto raw = unit_power_stream(999, 5);
  for (auto& v : raw) v *= 3.5f;
  for (auto k : {Kind::awgn, Kind::rayleigh}) {
    const auto c = cfg(k, 3, 10);
    auto whole = transmit(raw, c, 42);
    Channel ch(c);
    std::vector<float> pieced;
    for (std::size_t off = 0; off < raw.size(); off += 77) {
      const auto len = std::min<std::size_t>(77, raw.size() - off);
      auto part = ch.transmit_slots(std::span(raw).subspan(off, len), whole.scale, whole.realization, off);
      pieced.insert(pieced.end(), part.begin(), part.end());
    }
    EXPECT_EQ(pieced, whole.received);
    // Scattered slots through one gather call.
    std::vector<std::size_t> slots{998, 0, 501, 3};
    std::vector<float> picked;
    for (auto i : slots) picked.push_back(raw[i]);
    auto g = ch.transmit_gather(picked, slots, whole.scale, whole.realization);
    for (std::size_t j = 0; j < slots.size(); ++j) EXPECT_EQ(g[j], whole.received[slots[j]]);
  }
}

TEST(ChannelCounter, CountsEveryUse) {
  Channel ch(cfg(Kind::awgn, 10));
  EXPECT_EQ(ch.uses(), 0);
  const std::vector<float> s{1, 2, 3, 4};
  auto t = ch.transmit(s, 0);
  ch.transmit_slots(std::span(s).first(2), t.scale, t.realization, 0);
  EXPECT_EQ(ch.uses(), 2);
}

TEST(Trace, CsvHasOneRowPerSymbol) {
  const std::vector<float> s{1, 2, 3};
  auto t = transmit(s, cfg(Kind::rayleigh, 10), 0);
  std::ostringstream os;
  write_trace_csv(os, s, t);
  const auto text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(text.rfind("index,sent,gain_re,gain_im,noise_re,noise_im,received", 0), 0u);
}

TEST(EffectiveNoise, MatchesTransmitInNormalizedUnits) {
  auto s = unit_power_stream(100, 6);
  const auto c = cfg(Kind::rayleigh, 0, 1);
  auto t = transmit(s, c, 5);
  auto e = effective_noise(t.realization, c, s.size());
  auto p = pass_through(s, t.realization, c);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_FLOAT_EQ(p[i], static_cast<float>(s[i] + e[i]));
}
