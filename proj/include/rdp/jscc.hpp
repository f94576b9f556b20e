#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "rdp/channel.hpp"
#include "rdp/codec.hpp"
#include "rdp/rate.hpp"
#include "rdp/stream.hpp"

namespace rdp {

/// Pre-norm transformer block (multi-head self-attention + MLP) over a sequence of
/// embeddings (B, l, c). No positional embedding: position enters through the latent.
class TransformerBlockImpl : public torch::nn::Module {
public:
  TransformerBlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear qkv{nullptr}, proj{nullptr}, fc1{nullptr}, fc2{nullptr};

private:
  int64_t heads_;
};
TORCH_MODULE(TransformerBlock);

/// Rate codes as used by the networks: 0 for an untransmitted embedding, j for grid[j-1].
/// Masked positions always get code 0, whatever their allocation says.
torch::Tensor rate_codes(const RateAllocation& alloc, const MaskVector& mask, const RateConfig& cfg);
/// Codes from a (B, h, w) tensor of bit estimates, all positions transmitted.
torch::Tensor rate_codes_from_bits(const torch::Tensor& bits, const RateConfig& cfg);

/// Variable-rate JSCC encoder/decoder pair sharing one rate token bank.
///
/// Symbols live in a padded layout (B, l, Kmax): row i holds segment i in its first k_i
/// entries, zeros elsewhere. Flattening the valid entries row by row gives stream order.
class VrJsccImpl : public torch::nn::Module {
public:
  VrJsccImpl(const ModelConfig& model, const RateConfig& rate);

  /// y: (B, c, h, w); codes: (B, l) int64. Returns padded symbols (B, l, Kmax).
  torch::Tensor encode_padded(const torch::Tensor& y, const torch::Tensor& codes);
  /// Inverse mapping back to a latent (B, c, h, w) of the given spatial size.
  torch::Tensor decode_padded(const torch::Tensor& symbols, const torch::Tensor& codes, int64_t h,
                              int64_t w);

  /// (B, l, Kmax) mask of valid symbol slots for the given codes.
  torch::Tensor valid_slots(const torch::Tensor& codes) const;

  int64_t max_symbols() const { return grid_.back(); }
  const std::vector<int>& grid() const { return grid_; }

  /// Index 0 is r_0, index j the token for grid[j-1].
  torch::nn::Embedding tokens{nullptr};
  torch::nn::ModuleList encoder_blocks{nullptr}, decoder_blocks{nullptr};
  torch::nn::ModuleList encoder_heads{nullptr}, decoder_heads{nullptr};

private:
  std::vector<int> grid_;
  int64_t channels_;
};
TORCH_MODULE(VrJscc);

/// Inference entry points for a single image (batch size 1).
ChannelSymbolStream jscc_encode(VrJscc& net, const torch::Tensor& y, const RateAllocation& alloc,
                                const MaskVector& mask, const RateConfig& cfg);
torch::Tensor jscc_decode(VrJscc& net, const ChannelSymbolStream& received, const RateConfig& cfg,
                          int64_t h, int64_t w);

/// Valid symbols of a padded (1, l, Kmax) tensor in stream order.
std::vector<float> padded_to_symbols(const torch::Tensor& padded, const torch::Tensor& codes,
                                     const std::vector<int>& grid);
torch::Tensor symbols_to_padded(const ChannelSymbolStream& s, const torch::Tensor& codes,
                                int64_t kmax);

/// Differentiable training channel: each image's valid symbols are normalized to unit
/// power and receive effective noise drawn from the channel module (stream ids
/// `first_stream + b`). Returns the received padded symbols in the original scale.
torch::Tensor simulate_channel_padded(const torch::Tensor& symbols, const torch::Tensor& valid,
                                      const channel::ChannelConfig& cfg, std::uint64_t first_stream);

}  // namespace rdp
