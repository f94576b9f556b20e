#include "rdp/losses.hpp"

#include <atomic>

#include <c10/util/Logging.h>

#include "rdp/error.hpp"

namespace rdp {

namespace {

std::atomic<long long> g_clamp_events{0};

// -log(max(p, eps)); counts and reports arguments that needed the floor.
torch::Tensor neg_log(const torch::Tensor& p, double eps) {
  const auto clamped = (p.detach() < eps).sum().item<int64_t>();
  if (clamped > 0) {
    if (g_clamp_events.fetch_add(clamped) == 0)
      LOG(WARNING) << "loss: probability below " << eps << " clamped inside log (" << clamped << " entries)";
  }
  return -torch::log(p.clamp(eps, 1.0));
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw RejectedInput(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                        c10::str(b.sizes()));
  }
}

torch::Tensor perception(const torch::Tensor& d_out, const torch::Tensor& lp, const LossWeights& w) {
  auto term = neg_log(d_out, w.epsilon).mean();
  if (lp.defined()) term = term + w.c_p * lp.mean();
  return w.beta_scalar * term;
}

}  // namespace

void LossWeights::validate() const {
  RDP_REQUIRE(lambda >= 0.0, "loss weights: lambda must be nonnegative");
  RDP_REQUIRE(beta_scalar >= 0.0 && c_p >= 0.0, "loss weights: beta and C_P must be nonnegative");
  RDP_REQUIRE(eta > 0.0, "loss weights: eta must be positive");
  RDP_REQUIRE(distortion_weight > 0.0, "loss weights: distortion weight must be positive");
  RDP_REQUIRE(epsilon > 0.0 && epsilon < 0.5, "loss weights: epsilon must lie in (0, 0.5)");
}

long long clamp_events() { return g_clamp_events.load(); }

torch::Tensor mse(const torch::Tensor& x, const torch::Tensor& x_hat) {
  require_same(x, x_hat, "mse");
  return (x - x_hat).square().mean();
}

torch::Tensor loss_rd(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                      double lambda) {
  return mse(x, x_hat) + lambda * nll_rate.mean();
}

torch::Tensor loss_rd(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                      const LossWeights& w) {
  return w.distortion_weight * mse(x, x_hat) + w.lambda * nll_rate.mean();
}

torch::Tensor loss_rdp(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                       const torch::Tensor& d_out, const LossWeights& w, const torch::Tensor& lp) {
  return loss_rd(x, x_hat, nll_rate, w) + perception(d_out, lp, w);
}

torch::Tensor loss_discriminator(const torch::Tensor& d_fake, const torch::Tensor& d_real,
                                 double epsilon) {
  return neg_log(1.0 - d_fake, epsilon).mean() + neg_log(d_real, epsilon).mean();
}

torch::Tensor loss_dpct(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                        const torch::Tensor& d_out, const torch::Tensor& lp_map,
                        const torch::Tensor& beta_map, const LossWeights& w) {
  require_same(d_out, beta_map, "loss_dpct (D vs beta)");
  require_same(lp_map, beta_map, "loss_dpct (LPIPS vs beta)");
  auto weighted = beta_map.detach() * (neg_log(d_out, w.epsilon) + w.c_p * lp_map);
  return loss_rd(x, x_hat, nll_rate, w) + weighted.mean();
}

torch::Tensor loss_cct(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& nll_rate,
                       const torch::Tensor& d_out, const torch::Tensor& lp_scalar, const torch::Tensor& m,
                       const LossWeights& w) {
  require_same(x, x_hat, "loss_cct");
  RDP_REQUIRE(m.dim() == 4 && m.size(0) == x.size(0) && m.size(2) == x.size(2) &&
                  m.size(3) == x.size(3) && (m.size(1) == 1 || m.size(1) == x.size(1)),
              "loss_cct: mask must be pixel-aligned with the image");
  auto masked = (m.detach() * (x - x_hat).square()).mean();
  return w.distortion_weight * masked + w.lambda * nll_rate.mean() + perception(d_out, lp_scalar, w);
}

}  // namespace rdp
