#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/srem.hpp"

namespace rdp {

/// Architecture preset shared by every network in a model bundle.
struct ModelConfig {
  std::string preset = "toy";
  /// Latent channel dimension c.
  int channels = 64;
  /// Bottleneck (trunk) width N.
  int bottleneck = 48;
  /// Power of two, at least 8 (three conditioned x2 generator stages).
  int downsample_factor = 8;
  /// Conditioning residual bottlenecks per generator stage.
  int cond_rb_count = 1;
  /// Generator trunk widths at the latent scale and after each of the three x2 stages.
  std::vector<int> stage_widths{48, 48, 32, 16};
  int jscc_blocks = 2;
  int jscc_heads = 4;
  int jscc_mlp_ratio = 2;
  int hyper_channels = 32;
  int label_channels = 16;
  int disc_width = 32;
  bool attention = true;
  double p_max = 10000.0;
  double beta_max = 8.0;

  void validate() const;
  int upsampling_stages() const;

  /// c = 320, N = 256, df = 16, three Cond RBs per stage, four transformer blocks.
  static ModelConfig paper();
  /// c = 64, df = 8; small enough to train on a CPU.
  static ModelConfig toy();
  /// Minimal widths for fast unit tests.
  static ModelConfig tiny();
  static ModelConfig from_name(const std::string& name);
};

/// Spatial self-attention with a zero-initialised residual gate.
class AttentionBlockImpl : public torch::nn::Module {
public:
  explicit AttentionBlockImpl(int64_t width);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d query{nullptr}, key{nullptr}, value{nullptr}, out{nullptr};
  torch::Tensor gate;
};
TORCH_MODULE(AttentionBlock);

/// Nonlinear analysis transform: image (B, 3, H, W) -> latent (B, c, H/df, W/df).
class AnalysisTransformImpl : public torch::nn::Module {
public:
  explicit AnalysisTransformImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::ModuleList downs{nullptr};
  torch::nn::ModuleList blocks{nullptr};  // one Sequential of bottlenecks per stage
  torch::nn::ModuleList attn{nullptr};

private:
  int stages_;
  bool attention_;
};
TORCH_MODULE(AnalysisTransform);

/// Synthesis transform conditioned on global realism features (DPCT generator).
class ConditionalGeneratorImpl : public torch::nn::Module {
public:
  ConditionalGeneratorImpl(const ModelConfig& cfg, bool conditioned = true);

  /// Unclamped reconstruction. Passing `nullptr` runs the unconditioned trunk (RD pre-training).
  torch::Tensor forward(const torch::Tensor& y_hat, const GlobalFeatureSet* features);

  torch::nn::Conv2d head{nullptr};
  torch::nn::ModuleList ups{nullptr};
  torch::nn::ModuleList stage_blocks{nullptr};
  torch::nn::ModuleList tail{nullptr};
  AttentionBlock attn_latent{nullptr}, attn_first{nullptr};

private:
  ModelConfig cfg_;
};
TORCH_MODULE(ConditionalGenerator);

/// Label map (B, 3, H, W) in [0, 1] -> features at the latent scale and the three x2 scales.
class LabelMapEncoderImpl : public torch::nn::Module {
public:
  explicit LabelMapEncoderImpl(const ModelConfig& cfg);
  std::vector<torch::Tensor> forward(const torch::Tensor& label_map);

  torch::nn::ModuleList stem{nullptr};
  torch::nn::ModuleList downs{nullptr};

private:
  int df_;
};
TORCH_MODULE(LabelMapEncoder);

/// Synthesis transform whose intermediate features are concatenated with label features
/// (CCT generator).
class LabelConditionedGeneratorImpl : public torch::nn::Module {
public:
  explicit LabelConditionedGeneratorImpl(const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& y_hat, const std::vector<torch::Tensor>& label_features);

  torch::nn::Conv2d head{nullptr};
  torch::nn::ModuleList fuse{nullptr};
  torch::nn::ModuleList ups{nullptr};
  torch::nn::ModuleList stage_blocks{nullptr};
  torch::nn::ModuleList tail{nullptr};
  AttentionBlock attn_latent{nullptr}, attn_first{nullptr};

private:
  ModelConfig cfg_;
};
TORCH_MODULE(LabelConditionedGenerator);

enum class DiscriminatorCondition { latent, label_map };

/// Patch discriminator whose per-patch probabilities land on the latent grid.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
  PatchDiscriminatorImpl(const ModelConfig& cfg, DiscriminatorCondition cond);

  /// `cond` is the latent y (B, c, h, w) or a label map (B, 3, H, W) in [0, 1].
  /// Returns (B, h, w) with entries in (0, 1).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

  torch::nn::ModuleList downs{nullptr};
  torch::nn::Conv2d cond_proj{nullptr};
  torch::nn::Conv2d mix{nullptr}, score{nullptr};

private:
  DiscriminatorCondition cond_;
};
TORCH_MODULE(PatchDiscriminator);

/// Shape-checked entry points.
void check_image(const torch::Tensor& x, int downsample_factor);
torch::Tensor analyze(AnalysisTransform& net, const torch::Tensor& x, const ModelConfig& cfg);
/// Clamped to [0, 1]; rejects feature sets whose scales do not match the generator stages.
torch::Tensor synthesize_dpct(ConditionalGenerator& net, const torch::Tensor& y_hat,
                              const GlobalFeatureSet& features);
torch::Tensor synthesize_cct(LabelConditionedGenerator& net, const torch::Tensor& y_hat,
                             const std::vector<torch::Tensor>& label_features);
std::vector<torch::Tensor> encode_label_map(LabelMapEncoder& net, const torch::Tensor& label_map);

}  // namespace rdp
