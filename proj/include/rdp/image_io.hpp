#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace rdp {

/// 8-bit RGB raster, row-major interleaved.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

RgbImage read_png(const std::filesystem::path& path);
RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
void write_png(const std::filesystem::path& path, const RgbImage& img);

/// (3, H, W) or (1, 3, H, W) float in [0, 1] <-> 8-bit raster (rounded, clamped).
RgbImage tensor_to_rgb(const torch::Tensor& x);
torch::Tensor rgb_to_tensor(const RgbImage& img);

}  // namespace rdp
