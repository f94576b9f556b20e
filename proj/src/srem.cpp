#include "rdp/srem.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "rdp/error.hpp"

namespace rdp {

void SremConfig::validate() const {
  RDP_REQUIRE(p_max > 0.0, "srem: p_max must be positive");
  RDP_REQUIRE(channels > 0 && channels % 2 == 0, "srem: channel count must be even and positive");
}

std::vector<double> frequency_vector(const SremConfig& cfg) {
  cfg.validate();
  std::vector<double> nu(static_cast<std::size_t>(cfg.channels / 2));
  for (std::size_t i = 0; i < nu.size(); ++i)
    nu[i] = std::pow(cfg.p_max, -(2.0 * static_cast<double>(i)) / cfg.channels);
  return nu;
}

void RealismMap::validate() const {
  RDP_REQUIRE(beta.defined() && beta.dim() == 2, "realism map: beta must be a 2-D (h, w) array");
  RDP_REQUIRE(beta_max > 0.0, "realism map: beta_max must be positive");
  RDP_REQUIRE(torch::isfinite(beta).all().item<bool>(), "realism map: non-finite entry");
  const double lo = beta.min().item<double>();
  const double hi = beta.max().item<double>();
  if (lo < 0.0 || hi > beta_max) {
    std::ostringstream msg;
    msg << "realism map: entries must lie in [0, " << beta_max << "], found range [" << lo << ", "
        << hi << "]";
    throw RejectedInput(msg.str());
  }
}

RealismMap RealismMap::constant(int64_t h, int64_t w, double value, double beta_max) {
  RealismMap m{torch::full({h, w}, value, torch::kFloat32), beta_max};
  m.validate();
  return m;
}

RealismMap read_realism_map(std::istream& is) {
  int64_t w = 0, h = 0;
  double beta_max = 0.0;
  if (!(is >> w >> h >> beta_max)) throw RejectedInput("realism map: malformed header");
  RDP_REQUIRE(w > 0 && h > 0, "realism map: dimensions must be positive");
  auto beta = torch::empty({h, w}, torch::kFloat32);
  auto acc = beta.accessor<float, 2>();
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      double v;
      if (!(is >> v)) {
        throw RejectedInput("realism map: expected " + std::to_string(w * h) + " values, got " +
                            std::to_string(i * w + j));
      }
      acc[i][j] = static_cast<float>(v);
    }
  }
  RealismMap m{beta, beta_max};
  m.validate();
  return m;
}

void write_realism_map(std::ostream& os, const RealismMap& map) {
  map.validate();
  auto beta = map.beta.to(torch::kFloat32).contiguous();
  auto acc = beta.accessor<float, 2>();
  os << map.width() << ' ' << map.height() << ' ' << map.beta_max << '\n';
  for (int64_t i = 0; i < map.height(); ++i) {
    for (int64_t j = 0; j < map.width(); ++j) os << (j ? " " : "") << acc[i][j];
    os << '\n';
  }
}

RealismMap realism_map_from_gray(std::span<const std::uint8_t> pixels, int64_t w, int64_t h,
                                 double beta_max) {
  RDP_REQUIRE(static_cast<int64_t>(pixels.size()) == w * h,
              "realism map: raster size does not match dimensions");
  auto beta = torch::empty({h, w}, torch::kFloat32);
  auto acc = beta.accessor<float, 2>();
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j)
      acc[i][j] = static_cast<float>(pixels[static_cast<std::size_t>(i * w + j)] / 255.0 * beta_max);
  RealismMap m{beta, beta_max};
  m.validate();
  return m;
}

SinusoidalComponents sinusoidal_components(const torch::Tensor& beta, double beta_max,
                                           const SremConfig& cfg) {
  RDP_REQUIRE(beta.dim() == 3, "srem: beta must have shape (B, h, w)");
  RDP_REQUIRE(beta_max > 0.0, "srem: beta_max must be positive");
  const auto nu = frequency_vector(cfg);
  auto freq = torch::from_blob(const_cast<double*>(nu.data()), {static_cast<int64_t>(nu.size())},
                               torch::kFloat64)
                  .clone()
                  .to(beta.device())
                  .view({1, -1, 1, 1});
  auto beta_norm = (beta.to(torch::kFloat64) / beta_max * cfg.p_max).unsqueeze(1);
  auto phase = beta_norm * freq;
  return {torch::sin(phase).to(torch::kFloat32), torch::cos(phase).to(torch::kFloat32)};
}

const torch::Tensor& GlobalFeatureSet::at_stage(int stage) const {
  switch (stage) {
    case 0: return g;
    case 1: return g1;
    case 2: return g2;
    case 3: return g3;
    default: throw RejectedInput("global features: stage must be in [0, 3]");
  }
}

torch::Tensor upsample_nearest(const torch::Tensor& x, int64_t factor) {
  if (factor == 1) return x;
  return x.repeat_interleave(factor, -1).repeat_interleave(factor, -2);
}

SremImpl::SremImpl(SremConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  fc1 = register_module("fc1", torch::nn::Linear(cfg_.channels, cfg_.channels));
  fc2 = register_module("fc2", torch::nn::Linear(cfg_.channels, cfg_.channels));
}

torch::Tensor SremImpl::embed(const torch::Tensor& beta, double beta_max) {
  auto comps = sinusoidal_components(beta, beta_max, cfg_);
  // Pointwise MLP over the channel axis.
  auto h = torch::cat({comps.sin, comps.cos}, 1).to(fc1->weight.dtype()).permute({0, 2, 3, 1});
  h = fc2(torch::relu(fc1(h)));
  return h.permute({0, 3, 1, 2}).contiguous();
}

GlobalFeatureSet SremImpl::forward(const torch::Tensor& beta, double beta_max) {
  GlobalFeatureSet out;
  out.g = embed(beta, beta_max);
  out.g1 = upsample_nearest(out.g, 2);
  out.g2 = upsample_nearest(out.g, 4);
  out.g3 = upsample_nearest(out.g, 8);
  return out;
}

CondResidualBottleneckImpl::CondResidualBottleneckImpl(int64_t width, int64_t cond_channels) {
  const int64_t mid = std::max<int64_t>(width / 2, 1);
  conv_in = register_module("conv_in", torch::nn::Conv2d(torch::nn::Conv2dOptions(width, mid, 1)));
  conv_mid = register_module(
      "conv_mid", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, mid, 3).padding(1)));
  conv_out = register_module("conv_out", torch::nn::Conv2d(torch::nn::Conv2dOptions(mid, width, 1)));
  if (cond_channels > 0) {
    auto proj = [&](int64_t out) {
      return torch::nn::Conv2d(torch::nn::Conv2dOptions(cond_channels, out, 1).bias(false));
    };
    proj_in = register_module("proj_in", proj(mid));
    proj_mid = register_module("proj_mid", proj(mid));
    proj_out = register_module("proj_out", proj(width));
    // Start as the plain bottleneck; conditioning is learned on top of a pretrained trunk.
    torch::NoGradGuard no_grad;
    for (auto* p : {&proj_in, &proj_mid, &proj_out}) (*p)->weight.zero_();
  }
}

torch::Tensor CondResidualBottleneckImpl::forward(const torch::Tensor& x, const torch::Tensor& g) {
  const bool conditioned = g.defined() && !proj_in.is_empty();
  if (conditioned) {
    if (g.size(-1) != x.size(-1) || g.size(-2) != x.size(-2)) {
      throw RejectedInput("cond RB: global features are " + std::to_string(g.size(-2)) + "x" +
                          std::to_string(g.size(-1)) + " but layer features are " +
                          std::to_string(x.size(-2)) + "x" + std::to_string(x.size(-1)));
    }
  }
  auto h = conv_in(x);
  if (conditioned) h = h + proj_in(g);
  h = torch::relu(h);
  h = conv_mid(h);
  if (conditioned) h = h + proj_mid(g);
  h = torch::relu(h);
  h = conv_out(h);
  if (conditioned) h = h + proj_out(g);
  return x + h;
}

}  // namespace rdp
