#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace rdp {

struct SremConfig {
  /// Maximum sinusoidal period.
  double p_max = 10000.0;
  /// Embedding width; must be even (half sine, half cosine).
  int channels = 64;

  void validate() const;
};

/// nu_i = p_max^(-2i/c), i in [0, c/2).
std::vector<double> frequency_vector(const SremConfig& cfg);

/// Spatial realism control for one image: beta has shape (h, w), entries in [0, beta_max].
struct RealismMap {
  torch::Tensor beta;
  double beta_max = 8.0;

  int64_t height() const { return beta.size(0); }
  int64_t width() const { return beta.size(1); }
  void validate() const;

  static RealismMap constant(int64_t h, int64_t w, double value, double beta_max);
};

/// Text format: "w h beta_max" header line followed by h rows of w decimal values.
RealismMap read_realism_map(std::istream& is);
void write_realism_map(std::ostream& os, const RealismMap& map);
/// 8-bit grayscale raster (row-major, w * h bytes) scaled to [0, beta_max].
RealismMap realism_map_from_gray(std::span<const std::uint8_t> pixels, int64_t w, int64_t h,
                                 double beta_max);

struct SinusoidalComponents {
  torch::Tensor sin;  // (B, c/2, h, w)
  torch::Tensor cos;  // (B, c/2, h, w)
};

/// Sine and cosine of (beta / beta_max * p_max) * nu, broadcast over (c/2, h, w).
/// beta: (B, h, w). Evaluated in double precision, returned as float32.
SinusoidalComponents sinusoidal_components(const torch::Tensor& beta, double beta_max,
                                           const SremConfig& cfg);

/// Global realism features at the latent scale and three successive x2 upsamplings.
struct GlobalFeatureSet {
  torch::Tensor g;   // (B, c, h, w)
  torch::Tensor g1;  // (B, c, 2h, 2w)
  torch::Tensor g2;  // (B, c, 4h, 4w)
  torch::Tensor g3;  // (B, c, 8h, 8w)

  const torch::Tensor& at_stage(int stage) const;
};

torch::Tensor upsample_nearest(const torch::Tensor& x, int64_t factor);

/// Spatial realism embedding: sinusoidal encoding of beta followed by a pointwise
/// two-layer MLP, then nearest-neighbour upsampling to the generator scales.
class SremImpl : public torch::nn::Module {
public:
  explicit SremImpl(SremConfig cfg);

  /// beta: (B, h, w).
  GlobalFeatureSet forward(const torch::Tensor& beta, double beta_max);
  /// Only the latent-scale features g.
  torch::Tensor embed(const torch::Tensor& beta, double beta_max);

  const SremConfig& config() const { return cfg_; }

  torch::nn::Linear fc1{nullptr};
  torch::nn::Linear fc2{nullptr};

private:
  SremConfig cfg_;
};
TORCH_MODULE(Srem);

/// Residual bottleneck whose three convolutions each receive an additive, linearly
/// projected copy of a global feature map. With `cond_channels == 0`, or when called
/// without features, it is a plain residual bottleneck.
class CondResidualBottleneckImpl : public torch::nn::Module {
public:
  CondResidualBottleneckImpl(int64_t width, int64_t cond_channels);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& g = {});

  torch::nn::Conv2d conv_in{nullptr}, conv_mid{nullptr}, conv_out{nullptr};
  torch::nn::Conv2d proj_in{nullptr}, proj_mid{nullptr}, proj_out{nullptr};
};
TORCH_MODULE(CondResidualBottleneck);

}  // namespace rdp
