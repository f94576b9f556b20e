#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace rdp {

/// 10 log10(1 / MSE) with peak 1; identical inputs return `cap`.
double psnr(const torch::Tensor& x, const torch::Tensor& x_hat, double cap = 100.0);

struct PatchSet {
  torch::Tensor patches;            // (M, 3, p, p)
  std::vector<std::size_t> source;  // image index per patch
};

/// Raster-order crops of size p at the given stride; partial borders are dropped.
PatchSet extract_patches(const torch::Tensor& images, int p, int stride);

/// Frechet distance between Gaussians fitted to two (N, D) feature sets.
double frechet_distance(const torch::Tensor& feats_a, const torch::Tensor& feats_b);

struct SweepRow {
  std::string image;
  std::string config;
  double cbr = 0.0;
  double snr_db = 0.0;
  std::string setting;
  double psnr = 0.0;
  double fid = 0.0;
  double perceptual = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  static const char* header();
  void write_csv(std::ostream& os) const;
};

}  // namespace rdp
