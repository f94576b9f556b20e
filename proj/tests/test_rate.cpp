#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rdp/error.hpp"
#include "rdp/rate.hpp"

using namespace rdp;

namespace {

// Exhaustive nearest member, ties to the larger value.
int oracle_nearest(double t, const std::vector<int>& grid) {
  int best = grid.front();
  double best_d = std::abs(t - best);
  for (int g : grid) {
    const double d = std::abs(t - g);
    if (d < best_d || (d == best_d && g > best)) {
      best = g;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

TEST(Grid, PaperGridHas26EvenlySpreadIntegers) {
  const auto g = RateConfig::paper().grid;
  ASSERT_EQ(g.size(), 26u);
  EXPECT_EQ(g.front(), 1);
  EXPECT_EQ(g.back(), 320);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], std::lround(1 + 319.0 * i / 25.0));
  EXPECT_EQ(rate_index_width(g.size()), 5);
}

TEST(Grid, ConfigValidation) {
  RateConfig r = RateConfig::toy();
  r.side_info_bits_per_embedding = 3;  // 16 values need 4 bits
  EXPECT_THROW(r.validate(), RejectedInput);
  r = RateConfig::toy();
  r.grid = {5};
  EXPECT_THROW(r.validate(), RejectedInput);
  r = RateConfig::toy();
  r.grid = {1, 3, 3};
  EXPECT_THROW(r.validate(), RejectedInput);
}

TEST(Allocate, CertainEmbeddingGetsMinimum) {
  const std::vector<double> p{1.0};
  EXPECT_EQ(allocate_rates(p, RateConfig::paper()).k, std::vector<int>{1});
}

TEST(Allocate, ClampsAboveGrid) {
  const std::vector<double> p{1e-300};
  EXPECT_EQ(allocate_rates(p, RateConfig::toy()).k, std::vector<int>{64});
}

TEST(Allocate, TiesGoToLargerValue) {
  RateConfig r = RateConfig::toy();
  r.grid = {2, 4};
  r.eta = 1.0;
  const std::vector<double> bits{3.0};
  EXPECT_EQ(allocate_rates_from_bits(bits, r).k, std::vector<int>{4});
}

TEST(Allocate, RejectsNonPositiveLikelihood) {
  const std::vector<double> p{0.5, 0.0};
  try {
    allocate_rates(p, RateConfig::toy());
    FAIL();
  } catch (const RejectedInput& e) {
    EXPECT_NE(std::string(e.what()).find("position 1"), std::string::npos);
  }
  const std::vector<double> q{-0.1};
  EXPECT_THROW(allocate_rates(q, RateConfig::toy()), RejectedInput);
  const std::vector<double> big{1.5};
  EXPECT_THROW(allocate_rates(big, RateConfig::toy()), RejectedInput);
}

TEST(Allocate, MatchesBruteForceOracle) {
  std::mt19937_64 rng(7);
  // Likelihoods stay above the smallest normal double; larger bit counts go through the
  // bits entry point.
  std::uniform_real_distribution<double> logp(-1000.0, 0.0), bitd(0.0, 2500.0);
  for (const auto& cfg : {RateConfig::paper(), RateConfig::toy()}) {
    for (int map = 0; map < 200; ++map) {
      std::vector<double> p(256), bits(256);
      for (auto& v : p) v = std::exp2(logp(rng));
      for (auto& v : bits) v = bitd(rng);
      const auto a = allocate_rates(p, cfg);
      const auto b = allocate_rates_from_bits(bits, cfg);
      for (std::size_t i = 0; i < p.size(); ++i) {
        ASSERT_EQ(a.k[i], oracle_nearest(-cfg.eta * std::log2(p[i]), cfg.grid));
        ASSERT_EQ(b.k[i], oracle_nearest(cfg.eta * bits[i], cfg.grid));
      }
    }
  }
}

TEST(Allocate, MonotoneInLikelihood) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto cfg = RateConfig::paper();
  for (int i = 0; i < 10000; ++i) {
    const double a = std::exp2(-1000.0 * u(rng)), b = std::exp2(-1000.0 * u(rng));
    const std::vector<double> p{std::max(a, b), std::min(a, b)};
    const auto k = allocate_rates(p, cfg).k;
    ASSERT_LE(k[0], k[1]);
    const double c = 2500.0 * u(rng), d = 2500.0 * u(rng);
    const std::vector<double> bits{std::min(c, d), std::max(c, d)};
    const auto kb = allocate_rates_from_bits(bits, cfg).k;
    ASSERT_LE(kb[0], kb[1]);
  }
}

TEST(Allocate, IdempotentOnGridValues) {
  const auto cfg = RateConfig::paper();
  std::vector<double> bits;
  for (int g : cfg.grid) bits.push_back(g / cfg.eta);
  EXPECT_EQ(allocate_rates_from_bits(bits, cfg).k, cfg.grid);
  const auto toy = RateConfig::toy();
  std::vector<double> p;
  for (int g : toy.grid) p.push_back(std::exp2(-g / toy.eta));
  EXPECT_EQ(allocate_rates(p, toy).k, toy.grid);
}

TEST(Cbr, EmptyTransmissionIsSideInfoOnly) {
  const auto cfg = RateConfig::toy();
  RateAllocation a{std::vector<int>(64, 0)};
  const auto r = compute_cbr(a, 64, 64, cfg);
  EXPECT_EQ(r.symbol_count, 0);
  EXPECT_DOUBLE_EQ(r.side_info_symbols, 64 * 5 / 4.0);
  EXPECT_DOUBLE_EQ(r.cbr, 80.0 / (3 * 64 * 64));
}

TEST(Cbr, SummationExample) {
  RateAllocation a{{2, 3, 0, 5}};
  const auto r = compute_cbr(a, 16, 16, RateConfig::toy());
  EXPECT_EQ(r.symbol_count, 10);
  EXPECT_DOUBLE_EQ(r.cbr, (10 + 4 * 5 / 4.0) / (3.0 * 256));
}

TEST(Cbr, PerRegionAdditivity) {
  std::mt19937_64 rng(11);
  const auto cfg = RateConfig::toy();
  std::uniform_int_distribution<std::size_t> pick(0, cfg.grid.size() - 1);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    RateAllocation full, masked, complement;
    std::vector<std::string> region;
    for (int i = 0; i < 64; ++i) {
      const int k = cfg.grid[pick(rng)];
      const bool on = coin(rng);
      full.k.push_back(k);
      masked.k.push_back(on ? k : 0);
      complement.k.push_back(on ? 0 : k);
      region.push_back(on ? "a" : "b");
    }
    const auto rf = compute_cbr(full, 64, 64, cfg, region);
    const auto rm = compute_cbr(masked, 64, 64, cfg);
    const auto rc = compute_cbr(complement, 64, 64, cfg);
    ASSERT_EQ(rm.symbol_count + rc.symbol_count, rf.symbol_count);
    auto region_count = [&](const std::string& r) {
      auto it = rf.per_region.find(r);
      return it == rf.per_region.end() ? 0LL : it->second;
    };
    ASSERT_EQ(region_count("a") + region_count("b"), rf.symbol_count);
    ASSERT_EQ(region_count("a"), rm.symbol_count);
    // The side-information term is charged once.
    ASSERT_NEAR(rm.cbr + rc.cbr - rf.side_info_symbols / (3.0 * 64 * 64), rf.cbr, 1e-15);
  }
}

TEST(Cbr, PaperSideInfoFractionIsInTheStatedBand) {
  // 1024x2048 image, df 16: l = 64 * 128 embeddings, 5 bits each, 4 bits per symbol.
  const auto cfg = RateConfig::paper();
  const int W = 2048, H = 1024;
  const std::size_t l = 64 * 128;
  int checked = 0;
  for (int k : cfg.grid) {
    RateAllocation a{std::vector<int>(l, k)};
    const auto r = compute_cbr(a, W, H, cfg);
    if (r.cbr < 0.025 || r.cbr > 0.1) continue;
    const double frac = r.side_info_symbols / (r.symbol_count + r.side_info_symbols);
    EXPECT_GE(frac, 0.01) << "k=" << k;
    EXPECT_LE(frac, 0.07) << "k=" << k;
    ++checked;
  }
  EXPECT_GE(checked, 3);
}

TEST(Cbr, LabelMapCostCountsAsSideInfo) {
  RateAllocation a{{1, 1}};
  const auto r = compute_cbr(a, 8, 8, RateConfig::toy(), {}, 12.5);
  EXPECT_DOUBLE_EQ(r.side_info_symbols, 2 * 5 / 4.0 + 12.5);
  EXPECT_DOUBLE_EQ(r.label_map_symbols, 12.5);
}

TEST(RateIndices, RoundTripIsBitExact) {
  const auto cfg = RateConfig::paper();
  RateAllocation a{{1, 320, 0, 14, 27}};
  auto bytes = pack_rate_indices(a, cfg);
  // u32 length + ceil(5 * 5 / 8) bytes.
  ASSERT_EQ(bytes.size(), 4u + 4u);
  EXPECT_EQ(bytes[0], 5);
  // codes 1, 26, 0, 2, 3 packed LSB first in 5-bit fields.
  std::uint64_t packed = 1 | (26ull << 5) | (0ull << 10) | (2ull << 15) | (3ull << 20);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(bytes[4 + i], static_cast<std::uint8_t>(packed >> (8 * i)));
  std::size_t used = 0;
  EXPECT_EQ(unpack_rate_indices(bytes, cfg, &used), a);
  EXPECT_EQ(used, bytes.size());
}

TEST(RateIndices, RejectsOffGridValues) {
  RateAllocation a{{2}};
  EXPECT_THROW(pack_rate_indices(a, RateConfig::paper()), RejectedInput);
  std::vector<std::uint8_t> truncated{3, 0, 0, 0};
  EXPECT_THROW(unpack_rate_indices(truncated, RateConfig::paper()), RejectedInput);
}
