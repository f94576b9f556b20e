#pragma once

#include <torch/torch.h>

#include "rdp/codec.hpp"

namespace rdp {

/// Distribution parameters and likelihoods for a latent y of shape (B, c, h, w).
struct EntropyParameters {
  torch::Tensor mean;                // (B, c, h, w)
  torch::Tensor scale;               // (B, c, h, w), strictly positive
  torch::Tensor element_likelihood;  // (B, c, h, w), in (0, 1]
  /// -log2 p_y(y_i) per embedding, (B, h, w); the embedding likelihood is the product of
  /// its element likelihoods.
  torch::Tensor bits;
  /// Bits spent on any auxiliary (hyper) latent, (B). Zero for backends without one.
  torch::Tensor side_bits;

  /// Per-embedding likelihood 2^-bits, floored at the smallest positive double.
  torch::Tensor likelihoods() const;
  /// Sum of embedding bits per image, (B).
  torch::Tensor total_bits() const { return bits.sum({1, 2}); }
};

/// Probability mass of a unit-width bin centred on y under N(mean, scale^2).
torch::Tensor gaussian_bin_likelihood(const torch::Tensor& y, const torch::Tensor& mean,
                                      const torch::Tensor& scale);

/// Backend interface. A checkerboard-context model can implement this alongside the
/// default hyperprior.
class EntropyModel {
public:
  virtual ~EntropyModel() = default;
  virtual EntropyParameters estimate(const torch::Tensor& y) = 0;
};

/// Mean-scale Gaussian conditioned on a hyper latent z = h_a(y).
///
/// z is perturbed with uniform noise in training and rounded otherwise; its bits under a
/// learned per-channel Gaussian are reported in `side_bits` so the hyper path cannot carry
/// y for free.
class HyperpriorEntropyModelImpl : public torch::nn::Module, public EntropyModel {
public:
  explicit HyperpriorEntropyModelImpl(const ModelConfig& cfg);

  EntropyParameters estimate(const torch::Tensor& y) override;
  EntropyParameters forward(const torch::Tensor& y) { return estimate(y); }

  torch::nn::Sequential hyper_analysis{nullptr};
  torch::nn::Sequential hyper_synthesis{nullptr};
  torch::Tensor z_mean, z_log_scale;

private:
  int64_t channels_;
};
TORCH_MODULE(HyperpriorEntropyModel);

}  // namespace rdp
