#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/config.hpp"
#include "rdp/label_map.hpp"

namespace rdp {

struct Sample {
  torch::Tensor image;  // (3, H, W) in [0, 1]
  std::optional<InstanceLabelMap> labels;
};

class Dataset {
public:
  virtual ~Dataset() = default;
  virtual std::size_t size() const = 0;
  /// Deterministic: the same index always yields the same sample.
  virtual Sample get(std::size_t index) const = 0;
};

/// Procedural street scenes (sky, road, buildings, trees, cars, people) with textured
/// regions and a pixel-exact instance label map.
class SyntheticScenes : public Dataset {
public:
  SyntheticScenes(std::size_t count, int size, std::uint64_t seed);
  std::size_t size() const override { return count_; }
  Sample get(std::size_t index) const override;

  static std::vector<std::string> label_names();

private:
  std::size_t count_;
  int size_;
  std::uint64_t seed_;
};

/// PNG files under a directory, deterministically shuffled and split. Label maps are read
/// from `labels/<name>.png` with `registry.json` when both exist.
class ImageDirectory : public Dataset {
public:
  ImageDirectory(const DatasetSpec& spec, bool holdout);
  std::size_t size() const override { return files_.size(); }
  Sample get(std::size_t index) const override;

private:
  DatasetSpec spec_;
  bool holdout_;
  std::vector<std::string> files_;
  std::vector<RegistryEntry> registry_;
};

std::unique_ptr<Dataset> make_dataset(const DatasetSpec& spec, bool holdout);

struct Batch {
  torch::Tensor images;  // (B, 3, H, W)
  std::vector<InstanceLabelMap> labels;
};

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Epoch-wise shuffled index stream seeded from the data seed.
class BatchSampler {
public:
  BatchSampler(std::size_t size, std::uint64_t seed);
  std::vector<std::size_t> next(std::size_t batch);

private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64 rng_;
};

std::vector<RegistryEntry> read_registry_json(const std::string& path);

}  // namespace rdp
