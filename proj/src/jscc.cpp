#include "rdp/jscc.hpp"

#include <algorithm>
#include <cmath>

#include "rdp/error.hpp"

namespace rdp {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads, int64_t mlp_ratio)
    : heads_(heads) {
  RDP_REQUIRE(dim % heads == 0, "transformer: heads must divide the embedding width");
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({dim})));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({dim})));
  qkv = register_module("qkv", nn::Linear(dim, 3 * dim));
  proj = register_module("proj", nn::Linear(dim, dim));
  fc1 = register_module("fc1", nn::Linear(dim, dim * mlp_ratio));
  fc2 = register_module("fc2", nn::Linear(dim * mlp_ratio, dim));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), l = x.size(1), c = x.size(2);
  const auto hd = c / heads_;
  auto t = qkv(norm1(x)).view({b, l, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
  auto q = t[0], k = t[1], v = t[2];  // (B, heads, l, hd)
  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(double(hd)), -1);
  auto h = torch::matmul(attn, v).transpose(1, 2).reshape({b, l, c});
  auto y = x + proj(h);
  return y + fc2(torch::gelu(fc1(norm2(y))));
}

// ---------------------------------------------------------------------------------------------

torch::Tensor rate_codes(const RateAllocation& alloc, const MaskVector& mask, const RateConfig& cfg) {
  RDP_REQUIRE(alloc.size() == mask.size(), "rate codes: allocation and mask lengths differ");
  auto codes = torch::zeros({1, static_cast<int64_t>(alloc.size())}, torch::kInt64);
  auto acc = codes.accessor<int64_t, 2>();
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    if (!mask.m[i]) continue;
    auto it = std::lower_bound(cfg.grid.begin(), cfg.grid.end(), alloc.k[i]);
    if (it == cfg.grid.end() || *it != alloc.k[i]) {
      throw RejectedInput("allocation at position " + std::to_string(i) + ": k = " +
                          std::to_string(alloc.k[i]) + " is not a grid value");
    }
    acc[0][static_cast<int64_t>(i)] = (it - cfg.grid.begin()) + 1;
  }
  return codes;
}

torch::Tensor rate_codes_from_bits(const torch::Tensor& bits, const RateConfig& cfg) {
  RDP_REQUIRE(bits.dim() == 3, "rate codes: bits must be (B, h, w)");
  auto flat = bits.detach().to(torch::kFloat64).contiguous().view({-1});
  std::span<const double> view(flat.data_ptr<double>(), static_cast<std::size_t>(flat.numel()));
  const auto alloc = allocate_rates_from_bits(view, cfg);
  auto codes = torch::empty({flat.numel()}, torch::kInt64);
  auto acc = codes.accessor<int64_t, 1>();
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    acc[static_cast<int64_t>(i)] =
        (std::lower_bound(cfg.grid.begin(), cfg.grid.end(), alloc.k[i]) - cfg.grid.begin()) + 1;
  }
  return codes.view({bits.size(0), bits.size(1) * bits.size(2)});
}

// ---------------------------------------------------------------------------------------------

VrJsccImpl::VrJsccImpl(const ModelConfig& model, const RateConfig& rate)
    : grid_(rate.grid), channels_(model.channels) {
  model.validate();
  rate.validate();
  const int64_t c = model.channels;
  tokens = register_module(
      "tokens", nn::Embedding(nn::EmbeddingOptions(static_cast<int64_t>(grid_.size()) + 1, c)));
  torch::NoGradGuard no_grad;
  tokens->weight.normal_(0.0, 0.02);

  encoder_blocks = register_module("encoder_blocks", nn::ModuleList());
  decoder_blocks = register_module("decoder_blocks", nn::ModuleList());
  for (int i = 0; i < model.jscc_blocks; ++i) {
    encoder_blocks->push_back(TransformerBlock(c, model.jscc_heads, model.jscc_mlp_ratio));
    decoder_blocks->push_back(TransformerBlock(c, model.jscc_heads, model.jscc_mlp_ratio));
  }
  encoder_heads = register_module("encoder_heads", nn::ModuleList());
  decoder_heads = register_module("decoder_heads", nn::ModuleList());
  for (int v : grid_) {
    encoder_heads->push_back(nn::Linear(c, v));
    decoder_heads->push_back(nn::Linear(v, c));
  }
}

torch::Tensor VrJsccImpl::valid_slots(const torch::Tensor& codes) const {
  std::vector<int64_t> table{0};
  table.insert(table.end(), grid_.begin(), grid_.end());
  auto k = torch::tensor(table, torch::kInt64).index_select(0, codes.flatten()).view(codes.sizes());
  auto slots = torch::arange(max_symbols(), torch::kInt64).view({1, 1, -1});
  return slots < k.unsqueeze(-1);
}

torch::Tensor VrJsccImpl::encode_padded(const torch::Tensor& y, const torch::Tensor& codes) {
  RDP_REQUIRE(y.dim() == 4 && y.size(1) == channels_, "jscc encode: latent must be (B, c, h, w)");
  const auto b = y.size(0), l = y.size(2) * y.size(3);
  RDP_REQUIRE(codes.dim() == 2 && codes.size(0) == b && codes.size(1) == l,
              "jscc encode: codes must be (B, l)");
  auto keep = (codes > 0).to(y.dtype()).unsqueeze(-1);
  // Untransmitted positions carry only r_0, so their content cannot leak into the stream.
  auto x = y.flatten(2).transpose(1, 2) * keep + tokens(codes);
  for (const auto& m : *encoder_blocks) x = m->as<TransformerBlockImpl>()->forward(x);

  const auto kmax = max_symbols();
  auto flat = x.reshape({b * l, channels_});
  auto flat_codes = codes.reshape({-1});
  auto out = torch::zeros({b * l, kmax}, y.options());
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    auto idx = torch::nonzero(flat_codes == static_cast<int64_t>(j) + 1).squeeze(1);
    if (idx.numel() == 0) continue;
    auto vals = encoder_heads[j]->as<nn::LinearImpl>()->forward(flat.index_select(0, idx));
    vals = F::pad(vals, F::PadFuncOptions({0, kmax - grid_[j]}));
    out = out.index_add(0, idx, vals);
  }
  return out.view({b, l, kmax});
}

torch::Tensor VrJsccImpl::decode_padded(const torch::Tensor& symbols, const torch::Tensor& codes,
                                        int64_t h, int64_t w) {
  const auto b = symbols.size(0), l = h * w, kmax = max_symbols();
  RDP_REQUIRE(symbols.dim() == 3 && symbols.size(1) == l && symbols.size(2) == kmax,
              "jscc decode: symbols must be (B, l, Kmax)");
  RDP_REQUIRE(codes.dim() == 2 && codes.size(0) == b && codes.size(1) == l,
              "jscc decode: codes must be (B, l)");
  auto flat = symbols.reshape({b * l, kmax});
  auto flat_codes = codes.reshape({-1});
  auto lat = torch::zeros({b * l, channels_}, symbols.options());
  for (std::size_t j = 0; j < grid_.size(); ++j) {
    auto idx = torch::nonzero(flat_codes == static_cast<int64_t>(j) + 1).squeeze(1);
    if (idx.numel() == 0) continue;
    auto seg = flat.index_select(0, idx).narrow(1, 0, grid_[j]);
    lat = lat.index_add(0, idx, decoder_heads[j]->as<nn::LinearImpl>()->forward(seg));
  }
  auto x = lat.view({b, l, channels_}) + tokens(codes);
  for (const auto& m : *decoder_blocks) x = m->as<TransformerBlockImpl>()->forward(x);
  return x.transpose(1, 2).reshape({b, channels_, h, w});
}

// ---------------------------------------------------------------------------------------------

std::vector<float> padded_to_symbols(const torch::Tensor& padded, const torch::Tensor& codes,
                                     const std::vector<int>& grid) {
  auto p = padded.detach().to(torch::kFloat32).contiguous();
  auto pa = p.accessor<float, 3>();
  auto ca = codes.accessor<int64_t, 2>();
  std::vector<float> out;
  for (int64_t i = 0; i < p.size(1); ++i) {
    const auto code = ca[0][i];
    const int k = code ? grid[static_cast<std::size_t>(code - 1)] : 0;
    for (int j = 0; j < k; ++j) out.push_back(pa[0][i][j]);
  }
  return out;
}

torch::Tensor symbols_to_padded(const ChannelSymbolStream& s, const torch::Tensor& codes,
                                int64_t kmax) {
  auto out = torch::zeros({1, static_cast<int64_t>(s.positions()), kmax}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (const auto& seg : s.layout()) {
    RDP_REQUIRE(codes[0][static_cast<int64_t>(seg.position)].item<int64_t>() > 0,
                "stream: segment at an untransmitted position");
    for (std::size_t j = 0; j < seg.length; ++j)
      acc[0][static_cast<int64_t>(seg.position)][static_cast<int64_t>(j)] = s.symbols[seg.offset + j];
  }
  return out;
}

ChannelSymbolStream jscc_encode(VrJscc& net, const torch::Tensor& y, const RateAllocation& alloc,
                                const MaskVector& mask, const RateConfig& cfg) {
  RDP_REQUIRE(y.dim() == 4 && y.size(0) == 1, "jscc_encode: expects a single latent (1, c, h, w)");
  const auto l = static_cast<std::size_t>(y.size(2) * y.size(3));
  if (alloc.size() != l || mask.size() != l) {
    throw RejectedInput("jscc_encode: allocation/mask length must equal l = " + std::to_string(l));
  }
  torch::NoGradGuard no_grad;
  auto codes = rate_codes(alloc, mask, cfg);
  ChannelSymbolStream s{alloc, mask, {}};
  if (mask.count() > 0) s.symbols = padded_to_symbols(net->encode_padded(y, codes), codes, cfg.grid);
  return s;
}

torch::Tensor jscc_decode(VrJscc& net, const ChannelSymbolStream& received, const RateConfig& cfg,
                          int64_t h, int64_t w) {
  received.validate();
  if (received.positions() != static_cast<std::size_t>(h * w)) {
    throw RejectedInput("jscc_decode: stream covers " + std::to_string(received.positions()) +
                        " positions, latent grid has " + std::to_string(h * w));
  }
  torch::NoGradGuard no_grad;
  auto codes = rate_codes(received.alloc, received.mask, cfg);
  auto padded = symbols_to_padded(received, codes, net->max_symbols());
  return net->decode_padded(padded, codes, h, w);
}

torch::Tensor simulate_channel_padded(const torch::Tensor& symbols, const torch::Tensor& valid,
                                      const channel::ChannelConfig& cfg, std::uint64_t first_stream) {
  cfg.validate();
  if (cfg.noise_variance() == 0.0) return symbols;
  std::vector<torch::Tensor> rows;
  for (int64_t b = 0; b < symbols.size(0); ++b) {
    auto vb = valid[b].reshape({-1});
    auto sb = symbols[b].reshape({-1});
    const auto n = vb.sum().item<int64_t>();
    if (n == 0) {
      rows.push_back(symbols[b]);
      continue;
    }
    auto power = sb.masked_select(vb).square().mean();
    auto scale = torch::where(power > 0, power.sqrt(), torch::ones_like(power));
    auto r = channel::draw_realization(static_cast<std::size_t>((n + 1) / 2), cfg, first_stream + b);
    auto eff = channel::effective_noise(r, cfg, static_cast<std::size_t>(n));
    auto noise = torch::tensor(std::vector<float>(eff.begin(), eff.end()), symbols.options());
    auto padded_noise = torch::zeros_like(sb).masked_scatter(vb, noise);
    rows.push_back((sb + scale * padded_noise).view(symbols[b].sizes()));
  }
  return torch::stack(rows);
}

}  // namespace rdp
