#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

namespace rdp {

/// Feature-space image distance producing a map aligned with the latent grid.
class PerceptualMetric {
public:
  virtual ~PerceptualMetric() = default;
  /// x, x_hat: (B, 3, H, W). Returns a nonnegative (B, h, w) map, zero where inputs agree.
  virtual torch::Tensor spatial_map(const torch::Tensor& x, const torch::Tensor& x_hat, int64_t h,
                                    int64_t w) = 0;
  /// Pooled feature vectors (B, D) for Frechet distances.
  virtual torch::Tensor features(const torch::Tensor& x) = 0;

  torch::Tensor distance(const torch::Tensor& x, const torch::Tensor& x_hat);
};

/// Channel-normalized feature differences of a small convolutional network with fixed,
/// seeded random weights. Values are only comparable within this backend.
class RandomFeatureMetric : public PerceptualMetric {
public:
  explicit RandomFeatureMetric(std::uint64_t seed = 1234, std::vector<int64_t> widths = {16, 32, 64});

  torch::Tensor spatial_map(const torch::Tensor& x, const torch::Tensor& x_hat, int64_t h,
                            int64_t w) override;
  torch::Tensor features(const torch::Tensor& x) override;

private:
  std::vector<torch::Tensor> activations(const torch::Tensor& x) const;

  struct Layer {
    torch::Tensor weight, bias;
    int64_t stride;
  };
  std::vector<Layer> layers_;
};

std::shared_ptr<PerceptualMetric> default_perceptual_metric();

}  // namespace rdp
