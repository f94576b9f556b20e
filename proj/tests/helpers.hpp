#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "rdp/codec.hpp"
#include "rdp/label_map.hpp"
#include "rdp/rate.hpp"

namespace rdp::test {

inline RateConfig small_rate() {
  RateConfig r = RateConfig::toy();
  return r;
}

inline torch::Tensor random_image(int64_t b, int64_t h, int64_t w, std::uint64_t seed) {
  auto g = torch::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({b, 3, h, w}, g);
}

/// Left half "road", right half split top/bottom into two "car" instances.
inline InstanceLabelMap three_instance_map(int w, int h) {
  std::vector<RegistryEntry> reg{{{128, 64, 128}, "road"}, {{0, 0, 142}, "car"}, {{0, 0, 139}, "car"}};
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& c = x < w / 2 ? reg[0].rgb : (y < h / 2 ? reg[1].rgb : reg[2].rgb);
      for (int k = 0; k < 3; ++k) rgb[(static_cast<std::size_t>(y) * w + x) * 3 + k] = c[k];
    }
  return InstanceLabelMap::from_rgb(rgb, w, h, reg);
}

/// Central finite-difference check of d(f)/d(x) at `coords` random coordinates.
template <class F>
double max_fd_rel_error(F f, torch::Tensor x, int coords, std::uint64_t seed, double eps = 1e-4) {
  x = x.to(torch::kFloat64).detach().requires_grad_(true);
  auto y = f(x);
  y.backward();
  auto grad = x.grad().clone();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, x.numel() - 1);
  double worst = 0.0;
  for (int i = 0; i < coords; ++i) {
    const auto idx = pick(rng);
    auto xp = x.detach().clone();
    auto xm = x.detach().clone();
    xp.view(-1)[idx] += eps;
    xm.view(-1)[idx] -= eps;
    torch::NoGradGuard ng;
    const double fd = (f(xp).template item<double>() - f(xm).template item<double>()) / (2 * eps);
    const double an = grad.view(-1)[idx].item<double>();
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

}  // namespace rdp::test
