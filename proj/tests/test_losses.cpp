#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "rdp/error.hpp"
#include "rdp/label_map.hpp"
#include "rdp/losses.hpp"
#include "rdp/perceptual.hpp"
#include "rdp/schedule.hpp"

using namespace rdp;

namespace {

torch::Tensor t64(std::vector<double> v, std::vector<int64_t> shape) {
  return torch::tensor(v, torch::kFloat64).view(shape);
}

LossWeights weights(double lambda, double beta = 0.0, double c_p = 1.0) {
  LossWeights w;
  w.lambda = lambda;
  w.beta_scalar = beta;
  w.c_p = c_p;
  return w;
}

struct RandomCase {
  torch::Tensor x, x_hat, rate, d, lp;
};

RandomCase random_case(std::uint64_t seed, int64_t b = 2, int64_t hw = 16, int64_t grid = 4) {
  auto g = torch::make_generator<at::CPUGeneratorImpl>(seed);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  RandomCase c;
  c.x = torch::rand({b, 3, hw, hw}, g, opts);
  c.x_hat = torch::rand({b, 3, hw, hw}, g, opts);
  c.rate = torch::rand({b}, g, opts) * 50.0;
  c.d = torch::rand({b, grid, grid}, g, opts) * 0.98 + 0.01;
  c.lp = torch::rand({b, grid, grid}, g, opts);
  return c;
}

}  // namespace

TEST(LossRd, HandComputedExample) {
  auto x = t64({0.0, 0.5, 1.0, 0.25, 0.1, 0.2, 0.3, 0.4, 0.9, 0.8, 0.7, 0.6}, {1, 3, 2, 2});
  auto x_hat = t64({0.1, 0.5, 0.8, 0.25, 0.1, 0.0, 0.3, 0.4, 1.0, 0.8, 0.7, 0.5}, {1, 3, 2, 2});
  // Squared errors: 0.01, 0, 0.04, 0, 0, 0.04, 0, 0, 0.01, 0, 0, 0.01 -> sum 0.11.
  const double expected = 0.11 / 12.0 + 0.05 * 7.0;
  EXPECT_NEAR(loss_rd(x, x_hat, t64({7.0}, {1}), 0.05).item<double>(), expected, 1e-15);
  EXPECT_EQ(loss_rd(x, x, t64({0.0}, {1}), 0.05).item<double>(), 0.0);
  EXPECT_NEAR(loss_rd(x, x_hat, t64({7.0}, {1}), 0.0).item<double>(), 0.11 / 12.0, 1e-15);
}

TEST(LossRd, RejectsShapeMismatch) {
  EXPECT_THROW(mse(torch::zeros({1, 3, 2, 2}), torch::zeros({1, 3, 2, 3})), RejectedInput);
}

TEST(LossRdp, ScalarOracle) {
  auto c = random_case(1);
  const auto w = weights(0.02, 3.0, 0.5);
  const auto got = loss_rdp(c.x, c.x_hat, c.rate, c.d, w, c.lp).item<double>();
  double se = 0.0, nlog = 0.0, lp = 0.0;
  auto xa = c.x.flatten(), xb = c.x_hat.flatten(), da = c.d.flatten(), la = c.lp.flatten();
  for (int64_t i = 0; i < xa.numel(); ++i) se += std::pow(xa[i].item<double>() - xb[i].item<double>(), 2);
  for (int64_t i = 0; i < da.numel(); ++i) {
    nlog += -std::log(da[i].item<double>());
    lp += la[i].item<double>();
  }
  const double rate = (c.rate[0].item<double>() + c.rate[1].item<double>()) / 2.0;
  const double expected =
      se / xa.numel() + 0.02 * rate + 3.0 * (nlog / da.numel() + 0.5 * lp / la.numel());
  EXPECT_NEAR(got, expected, 1e-12 * std::abs(expected));
}

TEST(LossRdp, UnitScoresGiveNoPerceptionTerm) {
  auto c = random_case(2);
  const auto w = weights(0.01, 5.0);
  auto ones = torch::ones_like(c.d);
  EXPECT_EQ(loss_rdp(c.x, c.x_hat, c.rate, ones, w).item<double>(),
            loss_rd(c.x, c.x_hat, c.rate, w).item<double>());
}

TEST(LossDiscriminator, ClosedForms) {
  auto half = torch::full({2, 4, 4}, 0.5, torch::kFloat64);
  EXPECT_NEAR(loss_discriminator(half, half).item<double>(), 2.0 * std::log(2.0), 1e-15);
  auto zero = torch::zeros({2, 4, 4}, torch::kFloat64);
  auto one = torch::ones({2, 4, 4}, torch::kFloat64);
  EXPECT_EQ(loss_discriminator(zero, one).item<double>(), 0.0);
}

TEST(LossDiscriminator, ScalarOracle) {
  auto c = random_case(3);
  auto real = random_case(4).d;
  double expected = 0.0;
  auto f = c.d.flatten(), r = real.flatten();
  for (int64_t i = 0; i < f.numel(); ++i) {
    expected += -std::log(1.0 - f[i].item<double>()) / f.numel();
    expected += -std::log(r[i].item<double>()) / r.numel();
  }
  EXPECT_NEAR(loss_discriminator(c.d, real).item<double>(), expected, 1e-12 * expected);
}

TEST(LossDiscriminator, ClampsAndCounts) {
  const auto before = clamp_events();
  auto d = t64({0.0, 0.5}, {1, 1, 2});
  auto v = loss_discriminator(torch::ones_like(d), d).item<double>();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, (-std::log(1e-6) * 2) / 2 + (-std::log(1e-6) - std::log(0.5)) / 2, 1e-9);
  EXPECT_EQ(clamp_events() - before, 3);
}

TEST(LossDpct, DoubleLoopOracle) {
  auto c = random_case(5, 1, 16, 4);
  auto g = torch::make_generator<at::CPUGeneratorImpl>(9);
  auto beta = torch::rand({1, 4, 4}, g, torch::kFloat64) * 8.0;
  const auto w = weights(0.03, 0.0, 0.7);
  double weighted = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double b = beta[0][i][j].item<double>();
      weighted += b * (-std::log(c.d[0][i][j].item<double>()) + 0.7 * c.lp[0][i][j].item<double>());
    }
  const double expected = loss_rd(c.x, c.x_hat, c.rate, w).item<double>() + weighted / 16.0;
  EXPECT_NEAR(loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, beta, w).item<double>(), expected,
              1e-12 * expected);
}

TEST(LossDpct, ReductionChain) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    auto c = random_case(100 + s);
    auto w = weights(0.001 + 0.01 * static_cast<double>(s % 7));
    const double rd = loss_rd(c.x, c.x_hat, c.rate, w).item<double>();
    const double dpct = loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, torch::zeros_like(c.d), w).item<double>();
    auto w0 = w;
    w0.beta_scalar = 0.0;
    w0.c_p = 0.0;
    const double rdp = loss_rdp(c.x, c.x_hat, c.rate, c.d, w0, c.lp).item<double>();
    ASSERT_NEAR(dpct, rd, 1e-12);
    ASSERT_NEAR(rdp, rd, 1e-12);
  }
}

TEST(LossDpct, ConstantMapEqualsScalarWeight) {
  auto c = random_case(6);
  for (double b : {0.5, 3.0, 8.0}) {
    auto w = weights(0.01, b, 0.3);
    const double rdp = loss_rdp(c.x, c.x_hat, c.rate, c.d, w, c.lp).item<double>();
    w.beta_scalar = 0.0;
    const double dpct =
        loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, torch::full_like(c.d, b), w).item<double>();
    EXPECT_NEAR(dpct, rdp, 1e-12 * rdp);
  }
}

TEST(LossDpct, RejectsShapeMismatch) {
  auto c = random_case(7);
  EXPECT_THROW(loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, torch::zeros({2, 4, 5}, torch::kFloat64),
                         weights(0.01)),
               RejectedInput);
  EXPECT_THROW(loss_dpct(c.x, c.x_hat, c.rate, c.d, torch::zeros({2, 2, 2}, torch::kFloat64),
                         torch::zeros_like(c.d), weights(0.01)),
               RejectedInput);
}

TEST(LossDpct, BetaMapIsData) {
  auto c = random_case(8);
  auto beta = (torch::rand_like(c.d) * 8.0).requires_grad_(true);
  auto x_hat = c.x_hat.clone().requires_grad_(true);
  auto loss = loss_dpct(c.x, x_hat, c.rate, c.d, c.lp, beta, weights(0.01));
  loss.backward();
  EXPECT_FALSE(beta.grad().defined() && beta.grad().abs().max().item<double>() != 0.0);
  ASSERT_TRUE(x_hat.grad().defined());
}

TEST(LossDpct, GradientWrtReconstructionMatchesFiniteDifferences) {
  auto c = random_case(9, 1, 16, 2);
  RandomFeatureMetric metric;
  auto beta = torch::rand({1, 2, 2}, torch::kFloat64) * 8.0;
  auto w = weights(0.01);
  // x_hat feeds both the distortion and the perceptual map.
  auto f = [&](const torch::Tensor& x_hat) {
    return loss_dpct(c.x, x_hat, c.rate, c.d, metric.spatial_map(c.x, x_hat, 2, 2), beta, w);
  };
  EXPECT_LT(rdp::test::max_fd_rel_error(f, c.x_hat, 20, 2, 1e-6), 1e-3);
}

TEST(LossDpct, MonotoneInEachCell) {
  auto c = random_case(10);
  auto w = weights(0.01);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int64_t> cell(0, c.d.numel() - 1);
  auto beta = torch::rand_like(c.d) * 4.0;
  for (int t = 0; t < 200; ++t) {
    const auto before = loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, beta, w).item<double>();
    auto up = beta.clone();
    up.view(-1)[cell(rng)] += 1.0;
    const auto after = loss_dpct(c.x, c.x_hat, c.rate, c.d, c.lp, up, w).item<double>();
    ASSERT_GE(after, before);
  }
}

TEST(LossCct, MaskCases) {
  auto c = random_case(11, 1, 2, 1);
  auto w = weights(0.01, 8.0);
  auto d = torch::full({1, 1, 1}, 0.3, torch::kFloat64);
  auto lp = torch::full({1}, 0.2, torch::kFloat64);
  const double perception = 8.0 * (-std::log(0.3) + 0.2);
  const double rate = 0.01 * c.rate[0].item<double>();
  auto ones = torch::ones({1, 1, 2, 2}, torch::kFloat64);
  EXPECT_NEAR(loss_cct(c.x, c.x_hat, c.rate, d, lp, ones, w).item<double>(),
              mse(c.x, c.x_hat).item<double>() + rate + perception, 1e-12);
  EXPECT_NEAR(loss_cct(c.x, c.x_hat, c.rate, d, lp, torch::zeros_like(ones), w).item<double>(),
              rate + perception, 1e-12);
  // Left column transmitted: mean over all 12 entries of the masked squared error.
  auto half = t64({1, 0, 1, 0}, {1, 1, 2, 2});
  double se = 0.0;
  for (int ch = 0; ch < 3; ++ch)
    for (int i = 0; i < 2; ++i)
      se += std::pow(c.x[0][ch][i][0].item<double>() - c.x_hat[0][ch][i][0].item<double>(), 2);
  EXPECT_NEAR(loss_cct(c.x, c.x_hat, c.rate, d, lp, half, w).item<double>(), se / 12.0 + rate + perception,
              1e-12);
  EXPECT_THROW(loss_cct(c.x, c.x_hat, c.rate, d, lp, torch::ones({1, 1, 3, 2}), w), RejectedInput);
}

TEST(Weights, Validation) {
  LossWeights w;
  EXPECT_NO_THROW(w.validate());
  w.lambda = -1.0;
  EXPECT_THROW(w.validate(), RejectedInput);
  w = LossWeights{};
  w.epsilon = 0.0;
  EXPECT_THROW(w.validate(), RejectedInput);
}

TEST(Perceptual, NonnegativeAndZeroOnIdentical) {
  RandomFeatureMetric m;
  auto x = rdp::test::random_image(2, 32, 32, 1);
  auto y = rdp::test::random_image(2, 32, 32, 2);
  auto same = m.spatial_map(x, x, 4, 4);
  EXPECT_EQ(same.sizes(), (std::vector<int64_t>{2, 4, 4}));
  EXPECT_EQ(same.abs().max().item<double>(), 0.0);
  auto diff = m.spatial_map(x, y, 4, 4);
  EXPECT_GE(diff.min().item<double>(), 0.0);
  EXPECT_GT(diff.mean().item<double>(), 0.0);
}

TEST(Schedule, LearningRateDecay) {
  TrainingSchedule s;
  s.total_steps = 100;
  s.learning_rate = 1e-4;
  EXPECT_EQ(s.lr_at(0), 1e-4);
  EXPECT_EQ(s.lr_at(49), 1e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(50), 1e-5);
  EXPECT_DOUBLE_EQ(s.lr_at(99), 1e-5);
  s.constant_map_fraction = 1.5;
  EXPECT_THROW(s.validate(), RejectedInput);
}

TEST(Schedule, ConstantPhaseGivesConstantMaps) {
  TrainingSchedule s;
  s.total_steps = 1000;
  std::mt19937_64 rng(1);
  for (long long step : {0LL, 100LL, 799LL}) {
    auto m = sample_realism_map(step, s, 8.0, 4, 6, rng);
    EXPECT_EQ(m.beta.min().item<float>(), m.beta.max().item<float>());
    EXPECT_GE(m.beta.min().item<float>(), 0.0f);
    EXPECT_LE(m.beta.max().item<float>(), 8.0f);
  }
  EXPECT_THROW(sample_realism_map(1000, s, 8.0, 4, 4, rng), RejectedInput);
}

TEST(Schedule, LatePhaseCellsAreIndependentUniform) {
  TrainingSchedule s;
  s.total_steps = 1000;
  std::mt19937_64 rng(2);
  const int draws = 10000;
  auto sum = torch::zeros({4, 4}, torch::kFloat64);
  double cross = 0.0;
  for (int i = 0; i < draws; ++i) {
    auto m = sample_realism_map(900, s, 8.0, 4, 4, rng).beta.to(torch::kFloat64);
    sum += m;
    cross += (m[0][0].item<double>() - 4.0) * (m[3][3].item<double>() - 4.0);
  }
  auto mean = sum / draws;
  const double se = 8.0 / std::sqrt(12.0) / std::sqrt(draws);
  EXPECT_LT((mean - 4.0).abs().max().item<double>(), 3.0 * se);
  // Covariance between two cells; its standard error is var / sqrt(n).
  const double var = 64.0 / 12.0;
  EXPECT_LT(std::abs(cross / draws), 3.0 * var / std::sqrt(draws));
}

TEST(Schedule, Reproducible) {
  TrainingSchedule s;
  std::mt19937_64 a(5), b(5);
  EXPECT_TRUE(torch::equal(sample_realism_batch(900, s, 8.0, 3, 4, 4, a),
                           sample_realism_batch(900, s, 8.0, 3, 4, 4, b)));
}

namespace {

InstanceLabelMap quadrant_map(int n_instances) {
  std::vector<RegistryEntry> reg;
  for (int i = 0; i < n_instances; ++i)
    reg.push_back({{static_cast<std::uint8_t>(10 * i), 0, 0}, i % 2 ? "car" : "person"});
  const int w = 8, h = 8;
  std::vector<std::uint8_t> rgb(w * h * 3, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int q = std::min(n_instances - 1, (y / 4) * 2 + x / 4);
      rgb[(y * w + x) * 3] = reg[q].rgb[0];
    }
  return InstanceLabelMap::from_rgb(rgb, w, h, reg);
}

}  // namespace

TEST(InstanceMask, SingleInstanceAlwaysSelected) {
  auto map = quadrant_map(1);
  std::mt19937_64 rng(1);
  auto sel = sample_instance_mask(map, 0.25, rng);
  EXPECT_EQ(sel.instances, std::set<std::size_t>{0});
  EXPECT_EQ(sel.heatmap.count(), 64u);
}

TEST(InstanceMask, UniformOverFourInstances) {
  auto map = quadrant_map(4);
  std::mt19937_64 rng(3);
  const int draws = 10000;
  std::vector<int> hits(4, 0);
  for (int i = 0; i < draws; ++i) {
    auto sel = sample_instance_mask(map, 0.25, rng);
    ASSERT_EQ(sel.instances.size(), 1u);
    const auto inst = *sel.instances.begin();
    ++hits[inst];
    // Support equals the selected instance's pixels.
    for (std::size_t p = 0; p < map.instance.size(); ++p)
      ASSERT_EQ(sel.heatmap.m[p], map.instance[p] == inst ? 1 : 0);
  }
  const double se = std::sqrt(0.25 * 0.75 / draws);
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / draws, 0.25, 3.0 * se);
}

TEST(InstanceMask, Rejections) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_instance_mask(InstanceLabelMap{}, 0.25, rng), RejectedInput);
  EXPECT_THROW(sample_instance_mask(quadrant_map(4), 0.0, rng), RejectedInput);
  EXPECT_THROW(sample_instance_mask(quadrant_map(4), 1.5, rng), RejectedInput);
}
