#include "rdp/perceptual.hpp"

#include <cmath>
#include <random>

#include "rdp/error.hpp"

namespace rdp {

namespace F = torch::nn::functional;

torch::Tensor PerceptualMetric::distance(const torch::Tensor& x, const torch::Tensor& x_hat) {
  return spatial_map(x, x_hat, 1, 1).flatten(1).mean(1);
}

RandomFeatureMetric::RandomFeatureMetric(std::uint64_t seed, std::vector<int64_t> widths) {
  std::mt19937_64 rng(seed);
  int64_t in = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const int64_t out = widths[i];
    const double stddev = std::sqrt(2.0 / static_cast<double>(in * 9));
    std::normal_distribution<float> normal(0.0f, static_cast<float>(stddev));
    auto weight = torch::empty({out, in, 3, 3});
    auto* p = weight.data_ptr<float>();
    for (int64_t j = 0; j < weight.numel(); ++j) p[j] = normal(rng);
    layers_.push_back({weight, torch::zeros({out}), i == 0 ? 1 : 2});
    in = out;
  }
}

std::vector<torch::Tensor> RandomFeatureMetric::activations(const torch::Tensor& x) const {
  std::vector<torch::Tensor> acts;
  auto h = x * 2.0 - 1.0;
  for (const auto& l : layers_) {
    h = torch::relu(F::conv2d(h, l.weight.to(h.dtype()),
                              F::Conv2dFuncOptions().bias(l.bias.to(h.dtype())).stride(l.stride).padding(1)));
    acts.push_back(h);
  }
  return acts;
}

torch::Tensor RandomFeatureMetric::spatial_map(const torch::Tensor& x, const torch::Tensor& x_hat,
                                               int64_t h, int64_t w) {
  RDP_REQUIRE(x.sizes() == x_hat.sizes() && x.dim() == 4 && x.size(1) == 3,
              "perceptual: inputs must share shape (B, 3, H, W)");
  const auto a = activations(x), b = activations(x_hat);
  torch::Tensor total;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto na = a[i] / (a[i].square().sum(1, true) + 1e-10).sqrt();
    auto nb = b[i] / (b[i].square().sum(1, true) + 1e-10).sqrt();
    auto d = (na - nb).square().sum(1, true);
    auto pooled = F::adaptive_avg_pool2d(d, F::AdaptiveAvgPool2dFuncOptions({h, w})).squeeze(1);
    total = total.defined() ? total + pooled : pooled;
  }
  return total;
}

torch::Tensor RandomFeatureMetric::features(const torch::Tensor& x) {
  std::vector<torch::Tensor> pooled;
  for (const auto& a : activations(x)) pooled.push_back(a.mean({2, 3}));
  return torch::cat(pooled, 1);
}

std::shared_ptr<PerceptualMetric> default_perceptual_metric() {
  return std::make_shared<RandomFeatureMetric>();
}

}  // namespace rdp
