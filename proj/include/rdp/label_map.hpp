#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/stream.hpp"

namespace rdp {

using Rgb = std::array<std::uint8_t, 3>;

struct RegistryEntry {
  Rgb rgb;
  std::string label;
  bool operator==(const RegistryEntry&) const = default;
};

/// Pixel-level instance label map. Each registry entry is one instance (a distinct RGB
/// value); several instances may share a label name.
struct InstanceLabelMap {
  int width = 0;
  int height = 0;
  std::vector<RegistryEntry> registry;
  /// Registry index per pixel, row-major.
  std::vector<std::uint16_t> instance;

  /// Builds from an interleaved RGB raster; every colour must be registered.
  static InstanceLabelMap from_rgb(std::span<const std::uint8_t> rgb, int width, int height,
                                   std::vector<RegistryEntry> registry);

  /// Distinct label names in registry order.
  std::vector<std::string> labels() const;
  bool has_label(const std::string& label) const;
  /// Registry indices that occur in the raster.
  std::vector<std::size_t> present_instances() const;
  std::vector<std::uint8_t> rgb() const;
  /// (1, 3, H, W) float in [0, 1].
  torch::Tensor to_tensor() const;
  void validate() const;
  bool operator==(const InstanceLabelMap&) const = default;
};

struct BinaryHeatmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> m;

  std::size_t count() const;
  /// (1, 1, H, W) float.
  torch::Tensor to_tensor() const;
};

/// 1 exactly on pixels whose label is among `prompts`. Unknown labels are rejected by name.
BinaryHeatmap heatmap_from_prompts(const InstanceLabelMap& map, const std::set<std::string>& prompts);

/// Heatmap of an explicit instance set (registry indices).
BinaryHeatmap heatmap_from_instances(const InstanceLabelMap& map, const std::set<std::size_t>& instances);

/// Latent position i is set iff any pixel of its df x df block is set.
MaskVector downsample_mask(const BinaryHeatmap& m, int downsample_factor);

/// Label owning the majority of each latent block (ties go to the label that comes first in
/// registry order), raster order.
std::vector<std::string> block_owners(const InstanceLabelMap& map, int downsample_factor);

struct InstanceSelection {
  std::set<std::size_t> instances;
  BinaryHeatmap heatmap;
};

/// Uniformly picks max(1, round(fraction * n)) distinct present instances.
InstanceSelection sample_instance_mask(const InstanceLabelMap& map, double fraction, std::mt19937_64& rng);

/// Label-map wire format (little-endian):
///
///   u32 width, u32 height
///   u16 palette size, then per entry: 3 bytes RGB, u32 name length, name bytes
///   runs in raster order until width * height pixels are covered:
///     varint run length (>= 1), varint palette index
std::vector<std::uint8_t> encode_label_map_rle(const InstanceLabelMap& map);
InstanceLabelMap decode_label_map_rle(std::span<const std::uint8_t> bytes);

/// Channel-symbol cost of delivering the encoded label map.
double label_map_symbols(const InstanceLabelMap& map, double bits_per_channel_symbol);

}  // namespace rdp
