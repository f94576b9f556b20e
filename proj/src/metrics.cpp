#include "rdp/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include <Eigen/Dense>
#include <c10/util/Logging.h>

#include "rdp/error.hpp"

namespace rdp {

double psnr(const torch::Tensor& x, const torch::Tensor& x_hat, double cap) {
  RDP_REQUIRE(x.sizes() == x_hat.sizes(), "psnr: shape mismatch");
  const double m = (x.to(torch::kFloat64) - x_hat.to(torch::kFloat64)).square().mean().item<double>();
  if (m <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / m));
}

PatchSet extract_patches(const torch::Tensor& images, int p, int stride) {
  RDP_REQUIRE(images.dim() == 4, "extract_patches: images must be (N, 3, H, W)");
  RDP_REQUIRE(p > 0 && stride > 0 && p <= std::min(images.size(2), images.size(3)),
              "extract_patches: patch size must fit the image");
  PatchSet out;
  std::vector<torch::Tensor> crops;
  for (int64_t n = 0; n < images.size(0); ++n)
    for (int64_t y = 0; y + p <= images.size(2); y += stride)
      for (int64_t x = 0; x + p <= images.size(3); x += stride) {
        crops.push_back(images[n].narrow(1, y, p).narrow(2, x, p));
        out.source.push_back(static_cast<std::size_t>(n));
      }
  out.patches = torch::stack(crops);
  return out;
}

double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b) {
  RDP_REQUIRE(feats_a.dim() == 2 && feats_b.dim() == 2 && feats_a.size(1) == feats_b.size(1),
              "frechet_distance: feature sets must be (N, D) with equal D");
  const auto d = feats_a.size(1);
  RDP_REQUIRE(feats_a.size(0) > d && feats_b.size(0) > d, "frechet_distance: need at least D + 1 samples per set");
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto stats = [](const torch::Tensor& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    auto t = f.to(torch::kFloat64).contiguous();
    Eigen::Map<const Mat> m(t.data_ptr<double>(), t.size(0), t.size(1));
    mu = m.colwise().mean().transpose();
    const Eigen::MatrixXd centered = m.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(t.size(0) - 1);
  };
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  stats(feats_a, mu_a, cov_a);
  stats(feats_b, mu_b, cov_b);

  auto psd_sqrt = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
  };
  const double eps = 1e-6;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  auto singular = [&](const Eigen::MatrixXd& c) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly).eigenvalues().minCoeff() <= 0.0;
  };
  if (singular(cov_a) || singular(cov_b)) {
    LOG(WARNING) << "frechet_distance: degenerate covariance, adding " << eps << " I";
    cov_a += eps * eye;
    cov_b += eps * eye;
  }
  // (S_a S_b)^(1/2) has the same trace as (S_a^(1/2) S_b S_a^(1/2))^(1/2), which is symmetric.
  const Eigen::MatrixXd ra = psd_sqrt(cov_a);
  const Eigen::MatrixXd cross = psd_sqrt(ra * cov_b * ra);
  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(0.0, value);
}

const char* SweepResult::header() { return "image,config,cbr,snr_db,setting,psnr,fid,perceptual"; }

void SweepResult::write_csv(std::ostream& os) const {
  os << header() << '\n' << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.image << ',' << r.config << ',' << r.cbr << ',';
    if (std::isinf(r.snr_db)) os << "inf"; else os << r.snr_db;
    os << ',' << r.setting << ',' << r.psnr << ',' << r.fid << ',' << r.perceptual << '\n';
  }
}

}  // namespace rdp
