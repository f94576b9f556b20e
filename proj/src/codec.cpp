#include "rdp/codec.hpp"

#include <bit>
#include <cmath>

#include "rdp/error.hpp"

namespace rdp {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2));
}

nn::ConvTranspose2d up2(int64_t in, int64_t out) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
}

nn::Sequential conv_block(int64_t in, int64_t out, int64_t stride) {
  return nn::Sequential(conv(in, out, 3, stride),
                        nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)),
                        nn::ReLU());
}

nn::ModuleList bottlenecks(int count, int64_t width, int64_t cond_channels) {
  nn::ModuleList list;
  for (int i = 0; i < count; ++i) list->push_back(CondResidualBottleneck(width, cond_channels));
  return list;
}

torch::Tensor run_bottlenecks(nn::ModuleList parent, size_t index, torch::Tensor h,
                              const torch::Tensor& g = {}) {
  for (const auto& m : *parent[index]->as<nn::ModuleListImpl>())
    h = m->as<CondResidualBottleneckImpl>()->forward(h, g);
  return h;
}

std::string shape_str(const torch::Tensor& t) {
  std::string s = "(";
  for (int64_t i = 0; i < t.dim(); ++i) s += (i ? ", " : "") + std::to_string(t.size(i));
  return s + ")";
}

}  // namespace

void ModelConfig::validate() const {
  RDP_REQUIRE(channels > 0 && channels % 2 == 0, "model config: channel dimension must be even");
  RDP_REQUIRE(bottleneck > 0, "model config: bottleneck must be positive");
  RDP_REQUIRE(downsample_factor >= 8 && std::has_single_bit(static_cast<unsigned>(downsample_factor)),
              "model config: downsample factor must be a power of two >= 8");
  RDP_REQUIRE(cond_rb_count > 0, "model config: cond_rb_count must be positive");
  RDP_REQUIRE(stage_widths.size() == 4, "model config: stage_widths needs four entries");
  for (int w : stage_widths) RDP_REQUIRE(w >= 2, "model config: stage widths must be >= 2");
  RDP_REQUIRE(jscc_blocks > 0 && jscc_heads > 0 && channels % jscc_heads == 0,
              "model config: jscc heads must divide the channel dimension");
  RDP_REQUIRE(hyper_channels > 0 && label_channels > 0 && disc_width > 0,
              "model config: widths must be positive");
  RDP_REQUIRE(p_max > 0.0 && beta_max > 0.0, "model config: p_max and beta_max must be positive");
}

int ModelConfig::upsampling_stages() const {
  return std::countr_zero(static_cast<unsigned>(downsample_factor));
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.preset = "paper";
  c.channels = 320;
  c.bottleneck = 256;
  c.downsample_factor = 16;
  c.cond_rb_count = 3;
  c.stage_widths = {256, 256, 256, 256};
  c.jscc_blocks = 4;
  c.jscc_heads = 8;
  c.hyper_channels = 192;
  c.label_channels = 64;
  c.disc_width = 64;
  return c;
}

ModelConfig ModelConfig::toy() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.preset = "tiny";
  c.channels = 16;
  c.bottleneck = 16;
  c.stage_widths = {16, 16, 8, 8};
  c.jscc_blocks = 1;
  c.jscc_heads = 2;
  c.hyper_channels = 8;
  c.label_channels = 8;
  c.disc_width = 8;
  return c;
}

ModelConfig ModelConfig::from_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  if (name == "tiny") return tiny();
  throw RejectedInput("unknown model preset '" + name + "'");
}

// ---------------------------------------------------------------------------------------------

AttentionBlockImpl::AttentionBlockImpl(int64_t width) {
  const int64_t inner = std::max<int64_t>(width / 4, 4);
  query = register_module("query", conv(width, inner, 1));
  key = register_module("key", conv(width, inner, 1));
  value = register_module("value", conv(width, width, 1));
  out = register_module("out", conv(width, width, 1));
  gate = register_parameter("gate", torch::zeros({1}));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto q = query(x).flatten(2).transpose(1, 2);  // (B, hw, d)
  auto k = key(x).flatten(2);                    // (B, d, hw)
  auto v = value(x).flatten(2).transpose(1, 2);  // (B, hw, c)
  auto attn = torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(q.size(2))), -1);
  auto y = torch::bmm(attn, v).transpose(1, 2).reshape({b, c, h, w});
  return x + gate * out(y);
}

// ---------------------------------------------------------------------------------------------

AnalysisTransformImpl::AnalysisTransformImpl(const ModelConfig& cfg)
    : stages_(cfg.upsampling_stages()), attention_(cfg.attention) {
  cfg.validate();
  downs = register_module("downs", nn::ModuleList());
  blocks = register_module("blocks", nn::ModuleList());
  attn = register_module("attn", nn::ModuleList());
  int64_t in = 3;
  for (int s = 0; s < stages_; ++s) {
    const int scale_index = std::min(stages_ - 1 - s, 3);
    const int64_t out = (s == stages_ - 1) ? cfg.channels : cfg.stage_widths[scale_index];
    downs->push_back(conv(in, out, 5, 2));
    if (s < stages_ - 1) blocks->push_back(bottlenecks(cfg.cond_rb_count, out, 0));
    if (attention_ && s >= stages_ - 2) attn->push_back(AttentionBlock(out));
    in = out;
  }
}

torch::Tensor AnalysisTransformImpl::forward(const torch::Tensor& x) {
  auto h = x;
  size_t a = 0;
  for (int s = 0; s < stages_; ++s) {
    h = downs[s]->as<nn::Conv2dImpl>()->forward(h);
    if (s < stages_ - 1) {
      h = torch::relu(h);
      h = run_bottlenecks(blocks, s, h);
    }
    if (attention_ && s >= stages_ - 2) h = attn[a++]->as<AttentionBlockImpl>()->forward(h);
  }
  return h;
}

// ---------------------------------------------------------------------------------------------

ConditionalGeneratorImpl::ConditionalGeneratorImpl(const ModelConfig& cfg, bool conditioned)
    : cfg_(cfg) {
  cfg.validate();
  const auto& W = cfg.stage_widths;
  const int64_t cond = conditioned ? cfg.channels : 0;
  head = register_module("head", conv(cfg.channels, W[0], 3));
  ups = register_module("ups", nn::ModuleList());
  stage_blocks = register_module("stage_blocks", nn::ModuleList());
  for (int s = 0; s < 3; ++s) {
    ups->push_back(up2(W[s], W[s + 1]));
    stage_blocks->push_back(bottlenecks(cfg.cond_rb_count, W[s + 1], cond));
  }
  tail = register_module("tail", nn::ModuleList());
  for (int e = 3; e < cfg.upsampling_stages(); ++e) tail->push_back(up2(W[3], W[3]));
  tail->push_back(conv(W[3], 3, 3));
  if (cfg.attention) {
    attn_latent = register_module("attn_latent", AttentionBlock(W[0]));
    attn_first = register_module("attn_first", AttentionBlock(W[1]));
  }
}

torch::Tensor ConditionalGeneratorImpl::forward(const torch::Tensor& y_hat,
                                                const GlobalFeatureSet* features) {
  auto h = head(y_hat);
  if (!attn_latent.is_empty()) h = attn_latent(h);
  for (int s = 0; s < 3; ++s) {
    h = ups[s]->as<nn::ConvTranspose2dImpl>()->forward(h);
    const torch::Tensor g = features ? features->at_stage(s + 1) : torch::Tensor();
    h = run_bottlenecks(stage_blocks, s, h, g);
    if (s == 0 && !attn_first.is_empty()) h = attn_first(h);
  }
  const auto n = tail->size();
  for (size_t i = 0; i + 1 < n; ++i)
    h = torch::relu(tail[i]->as<nn::ConvTranspose2dImpl>()->forward(h));
  return tail[n - 1]->as<nn::Conv2dImpl>()->forward(h);
}

// ---------------------------------------------------------------------------------------------

LabelMapEncoderImpl::LabelMapEncoderImpl(const ModelConfig& cfg) : df_(cfg.downsample_factor) {
  cfg.validate();
  const int64_t L = cfg.label_channels;
  stem = register_module("stem", nn::ModuleList());
  stem->push_back(conv_block(3, L, 1));
  for (int e = 3; e < cfg.upsampling_stages(); ++e) stem->push_back(conv_block(L, L, 2));
  downs = register_module("downs", nn::ModuleList());
  for (int s = 0; s < 3; ++s) downs->push_back(conv_block(L, L, 2));
}

std::vector<torch::Tensor> LabelMapEncoderImpl::forward(const torch::Tensor& label_map) {
  std::vector<torch::Tensor> pyramid(4);
  auto h = label_map;
  for (const auto& m : *stem) h = m->as<nn::SequentialImpl>()->forward(h);
  pyramid[3] = h;
  for (int s = 0; s < 3; ++s)
    pyramid[2 - s] = downs[s]->as<nn::SequentialImpl>()->forward(pyramid[3 - s]);
  return pyramid;
}

// ---------------------------------------------------------------------------------------------

LabelConditionedGeneratorImpl::LabelConditionedGeneratorImpl(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const auto& W = cfg.stage_widths;
  const int64_t L = cfg.label_channels;
  head = register_module("head", conv(cfg.channels, W[0], 3));
  fuse = register_module("fuse", nn::ModuleList());
  ups = register_module("ups", nn::ModuleList());
  stage_blocks = register_module("stage_blocks", nn::ModuleList());
  fuse->push_back(conv(W[0] + L, W[0], 1));
  for (int s = 0; s < 3; ++s) {
    ups->push_back(up2(W[s], W[s + 1]));
    fuse->push_back(conv(W[s + 1] + L, W[s + 1], 1));
    stage_blocks->push_back(bottlenecks(cfg.cond_rb_count, W[s + 1], 0));
  }
  tail = register_module("tail", nn::ModuleList());
  for (int e = 3; e < cfg.upsampling_stages(); ++e) tail->push_back(up2(W[3], W[3]));
  tail->push_back(conv(W[3], 3, 3));
  if (cfg.attention) {
    attn_latent = register_module("attn_latent", AttentionBlock(W[0]));
    attn_first = register_module("attn_first", AttentionBlock(W[1]));
  }
}

torch::Tensor LabelConditionedGeneratorImpl::forward(const torch::Tensor& y_hat,
                                                     const std::vector<torch::Tensor>& label_features) {
  RDP_REQUIRE(label_features.size() == 4, "cct generator: expected four label feature scales");
  auto h = head(y_hat);
  h = fuse[0]->as<nn::Conv2dImpl>()->forward(torch::cat({h, label_features[0]}, 1));
  if (!attn_latent.is_empty()) h = attn_latent(h);
  for (int s = 0; s < 3; ++s) {
    h = ups[s]->as<nn::ConvTranspose2dImpl>()->forward(h);
    h = fuse[s + 1]->as<nn::Conv2dImpl>()->forward(torch::cat({h, label_features[s + 1]}, 1));
    h = run_bottlenecks(stage_blocks, s, h);
    if (s == 0 && !attn_first.is_empty()) h = attn_first(h);
  }
  const auto n = tail->size();
  for (size_t i = 0; i + 1 < n; ++i)
    h = torch::relu(tail[i]->as<nn::ConvTranspose2dImpl>()->forward(h));
  return tail[n - 1]->as<nn::Conv2dImpl>()->forward(h);
}

// ---------------------------------------------------------------------------------------------

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const ModelConfig& cfg, DiscriminatorCondition cond)
    : cond_(cond) {
  cfg.validate();
  downs = register_module("downs", nn::ModuleList());
  int64_t in = cond == DiscriminatorCondition::label_map ? 6 : 3;
  int64_t width = cfg.disc_width;
  for (int s = 0; s < cfg.upsampling_stages(); ++s) {
    width = cfg.disc_width * std::min<int64_t>(int64_t{1} << s, 4);
    // Non-overlapping 2x2 stages: the score at a grid cell sees only its own df x df block.
    downs->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, 2).stride(2)));
    in = width;
  }
  int64_t mix_in = width;
  if (cond == DiscriminatorCondition::latent) {
    cond_proj = register_module("cond_proj", conv(cfg.channels, cfg.disc_width, 1));
    mix_in += cfg.disc_width;
  }
  mix = register_module("mix", conv(mix_in, width, 1));
  score = register_module("score", conv(width, 1, 1));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto h = x * 2.0 - 1.0;
  if (cond_ == DiscriminatorCondition::label_map) {
    RDP_REQUIRE(cond.dim() == 4 && cond.size(1) == 3 && cond.size(2) == x.size(2) &&
                    cond.size(3) == x.size(3),
                "discriminator: label map must be pixel-aligned with the image");
    h = torch::cat({h, cond * 2.0 - 1.0}, 1);
  }
  for (const auto& m : *downs)
    h = torch::leaky_relu(m->as<nn::Conv2dImpl>()->forward(h), 0.2);
  if (cond_ == DiscriminatorCondition::latent) {
    RDP_REQUIRE(cond.dim() == 4, "discriminator: latent condition must be (B, c, h, w)");
    auto c = cond_proj(cond);
    if (c.size(2) != h.size(2) || c.size(3) != h.size(3)) {
      c = torch::nn::functional::interpolate(
          c, torch::nn::functional::InterpolateFuncOptions()
                 .size(std::vector<int64_t>{h.size(2), h.size(3)})
                 .mode(torch::kNearest));
    }
    h = torch::cat({h, c}, 1);
  }
  h = torch::leaky_relu(mix(h), 0.2);
  return torch::sigmoid(score(h)).squeeze(1);
}

// ---------------------------------------------------------------------------------------------

void check_image(const torch::Tensor& x, int downsample_factor) {
  if (x.dim() != 4 || x.size(1) != 3)
    throw RejectedInput("image must have shape (B, 3, H, W), got " + shape_str(x));
  if (x.size(2) % downsample_factor != 0 || x.size(3) % downsample_factor != 0) {
    throw RejectedInput("image size " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                        " is not divisible by the downsample factor " +
                        std::to_string(downsample_factor));
  }
}

torch::Tensor analyze(AnalysisTransform& net, const torch::Tensor& x, const ModelConfig& cfg) {
  check_image(x, cfg.downsample_factor);
  return net->forward(x);
}

torch::Tensor synthesize_dpct(ConditionalGenerator& net, const torch::Tensor& y_hat,
                              const GlobalFeatureSet& features) {
  RDP_REQUIRE(y_hat.dim() == 4, "synthesize: latent must be (B, c, h, w)");
  for (int s = 1; s <= 3; ++s) {
    const auto& g = features.at_stage(s);
    const int64_t f = int64_t{1} << s;
    if (!g.defined() || g.dim() != 4 || g.size(2) != y_hat.size(2) * f || g.size(3) != y_hat.size(3) * f) {
      throw RejectedInput("synthesize: global feature g" + std::to_string(s) + " has shape " +
                          (g.defined() ? shape_str(g) : std::string("(undefined)")) +
                          ", expected spatial size " + std::to_string(y_hat.size(2) * f) + "x" +
                          std::to_string(y_hat.size(3) * f));
    }
  }
  return net->forward(y_hat, &features).clamp(0.0, 1.0);
}

torch::Tensor synthesize_cct(LabelConditionedGenerator& net, const torch::Tensor& y_hat,
                             const std::vector<torch::Tensor>& label_features) {
  RDP_REQUIRE(y_hat.dim() == 4, "synthesize: latent must be (B, c, h, w)");
  RDP_REQUIRE(label_features.size() == 4, "synthesize: expected four label feature scales");
  for (int s = 0; s < 4; ++s) {
    const int64_t f = int64_t{1} << s;
    const auto& l = label_features[s];
    if (l.size(2) != y_hat.size(2) * f || l.size(3) != y_hat.size(3) * f) {
      throw RejectedInput("synthesize: label features at scale " + std::to_string(s) + " have shape " +
                          shape_str(l) + ", incompatible with latent " + shape_str(y_hat));
    }
  }
  return net->forward(y_hat, label_features).clamp(0.0, 1.0);
}

std::vector<torch::Tensor> encode_label_map(LabelMapEncoder& net, const torch::Tensor& label_map) {
  if (label_map.dim() != 4 || label_map.size(1) != 3)
    throw RejectedInput("label map must have shape (B, 3, H, W), got " + shape_str(label_map));
  return net->forward(label_map);
}

}  // namespace rdp
