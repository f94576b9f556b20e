#pragma once

#include <torch/torch.h>

namespace rdp {

struct LossWeights {
  double lambda = 0.01;
  /// Perception weight for the scalar objectives (CCT uses 8).
  double beta_scalar = 0.0;
  /// Weight of the perceptual-metric term inside the perception penalty.
  double c_p = 1.0;
  double eta = 0.2;
  /// Multiplies the MSE term. 1 reproduces the plain objectives.
  double distortion_weight = 1.0;
  /// Probabilities are clamped to [epsilon, 1] inside every log.
  double epsilon = 1e-6;

  void validate() const;
};

/// Number of log arguments clamped so far, process-wide.
long long clamp_events();

torch::Tensor mse(const torch::Tensor& x, const torch::Tensor& x_hat);

/// d(x, x_hat) + lambda * nll_rate.
torch::Tensor loss_rd(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                      double lambda);
torch::Tensor loss_rd(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                      const LossWeights& w);

/// RD loss + beta_scalar * (mean(-log D) + C_P * lp). `lp` may be undefined (no metric term).
torch::Tensor loss_rdp(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                       const torch::Tensor& d_out, const LossWeights& w,
                       const torch::Tensor& lp = {});

/// mean(-log(1 - D_fake)) + mean(-log D_real).
torch::Tensor loss_discriminator(const torch::Tensor& d_fake, const torch::Tensor& d_real,
                                 double epsilon = 1e-6);

/// RD loss + spatial mean of beta_map * (-log D + C_P * lp_map). D, lp and beta share the
/// latent-grid shape (B, h, w). beta_map is treated as data.
torch::Tensor loss_dpct(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                        const torch::Tensor& d_out, const torch::Tensor& lp_map,
                        const torch::Tensor& beta_map, const LossWeights& w);

/// Masked MSE (mean over all pixels of m * squared error) + lambda * nll_rate +
/// beta_scalar * (mean(-log D) + C_P * lp_scalar). m: (B, 1, H, W) or (B, 3, H, W).
torch::Tensor loss_cct(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                       const torch::Tensor& d_out, const torch::Tensor& lp_scalar, const torch::Tensor& m,
                       const LossWeights& w);

}  // namespace rdp
