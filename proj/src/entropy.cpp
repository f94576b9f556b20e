#include "rdp/entropy.hpp"

#include <cmath>
#include <limits>

#include "rdp/error.hpp"

namespace rdp {

namespace nn = torch::nn;

namespace {

constexpr double kMinLikelihood = 1e-9;
constexpr double kScaleFloor = 0.11;

torch::Tensor std_normal_cdf(const torch::Tensor& x) {
  return 0.5 * torch::erfc(-x / std::sqrt(2.0));
}

}  // namespace

torch::Tensor EntropyParameters::likelihoods() const {
  auto p = torch::exp2(-bits.to(torch::kFloat64));
  return p.clamp_min(std::numeric_limits<double>::min());
}

torch::Tensor gaussian_bin_likelihood(const torch::Tensor& y, const torch::Tensor& mean,
                                      const torch::Tensor& scale) {
  // Evaluate on the lower tail (|y - mean|) where erfc keeps precision.
  auto v = torch::abs(y - mean);
  auto upper = std_normal_cdf((0.5 - v) / scale);
  auto lower = std_normal_cdf((-0.5 - v) / scale);
  return (upper - lower).clamp(kMinLikelihood, 1.0);
}

HyperpriorEntropyModelImpl::HyperpriorEntropyModelImpl(const ModelConfig& cfg) : channels_(cfg.channels) {
  const int64_t c = cfg.channels, hc = cfg.hyper_channels;
  hyper_analysis = register_module(
      "hyper_analysis",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(c, hc, 3).padding(1)), nn::ReLU(),
                     nn::Conv2d(nn::Conv2dOptions(hc, hc, 3).stride(2).padding(1))));
  hyper_synthesis = register_module(
      "hyper_synthesis",
      nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(hc, hc, 4).stride(2).padding(1)),
                     nn::ReLU(), nn::Conv2d(nn::Conv2dOptions(hc, 2 * c, 3).padding(1))));
  z_mean = register_parameter("z_mean", torch::zeros({1, hc, 1, 1}));
  z_log_scale = register_parameter("z_log_scale", torch::zeros({1, hc, 1, 1}));
}

EntropyParameters HyperpriorEntropyModelImpl::estimate(const torch::Tensor& y) {
  RDP_REQUIRE(y.dim() == 4 && y.size(1) == channels_, "entropy model: latent must be (B, c, h, w)");
  auto z = hyper_analysis->forward(y);
  if (is_training()) {
    z = z + torch::rand_like(z) - 0.5;
  } else {
    z = torch::round(z);
  }
  auto params = hyper_synthesis->forward(z);
  // The transposed convolution doubles ceil(h/2); trim back to the latent grid.
  params = params.narrow(2, 0, y.size(2)).narrow(3, 0, y.size(3));
  auto chunks = params.chunk(2, 1);

  EntropyParameters out;
  out.mean = chunks[0];
  out.scale = torch::softplus(chunks[1]) + kScaleFloor;
  out.element_likelihood = gaussian_bin_likelihood(y, out.mean, out.scale);
  out.bits = -torch::log2(out.element_likelihood).sum(1);

  auto z_scale = torch::exp(z_log_scale) + kScaleFloor;
  auto z_like = gaussian_bin_likelihood(z, z_mean.expand_as(z), z_scale.expand_as(z));
  out.side_bits = -torch::log2(z_like).sum({1, 2, 3});
  return out;
}

}  // namespace rdp
