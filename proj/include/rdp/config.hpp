#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdp/channel.hpp"
#include "rdp/codec.hpp"
#include "rdp/losses.hpp"
#include "rdp/rate.hpp"
#include "rdp/schedule.hpp"

namespace rdp {

using Json = nlohmann::json;

enum class Mode { dpct, cct };
Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

/// Source images: a directory of PNGs or the built-in procedural scene generator.
struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | directory
  std::string directory;
  int crop_size = 64;
  /// "crop": random crops at native resolution; "downscale": box-filter by the largest
  /// integer factor that keeps the short side >= crop_size, then crop.
  std::string resize = "crop";
  double holdout_fraction = 0.1;
  int synthetic_count = 4096;
  int holdout_count = 32;
  std::uint64_t seed = 0;

  void validate(int downsample_factor) const;
};

struct TrainSettings {
  long long rd_steps = 1000;
  long long rdp_steps = 1000;
  int batch_size = 8;
  double learning_rate = 1e-4;
  double constant_map_fraction = 0.8;
  double decay_start_fraction = 0.5;
  double decay_factor = 0.1;
  double mask_fraction = 0.25;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/default";
  long long checkpoint_every = 0;  // 0: only at phase ends
  long long log_every = 10;
  int probe_images = 4;
};

struct EvalSettings {
  std::vector<std::string> checkpoints;
  std::vector<double> betas{0.0, 4.0, 8.0};
  std::vector<std::vector<std::string>> prompt_sets;
  std::vector<double> snrs_db{10.0};
  int images = 16;
  int patch_size = 32;
  int patch_stride = 32;
  std::string output = "sweep.csv";
};

struct ServeSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string dpct_checkpoint;
  std::string cct_checkpoint;
};

struct TransmitSettings {
  std::string checkpoint;
  std::string image;
  std::string label_map;      // PNG raster for CCT
  std::string registry;       // JSON list of {"rgb": [r,g,b], "label": name}
  std::string realism_map;    // text file; empty: constant maps from eval.betas
  std::vector<std::string> prompts;
  std::string output_dir = "transmit_out";
  std::uint64_t stream_id = 0;
};

struct AppConfig {
  Mode mode = Mode::dpct;
  std::string preset = "toy";
  ModelConfig model = ModelConfig::toy();
  RateConfig rate = RateConfig::toy();
  channel::ChannelConfig channel;
  LossWeights loss;
  DatasetSpec data;
  TrainSettings train;
  EvalSettings eval;
  ServeSettings serve;
  TransmitSettings transmit;

  void validate() const;
};

/// Parses a config document. Unknown keys anywhere are rejected, all of them listed.
AppConfig config_from_json(const Json& j);
Json config_to_json(const AppConfig& c);
AppConfig load_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides; values are parsed as JSON, falling back to a string.
void apply_overrides(Json& doc, const std::vector<std::string>& overrides);

Json to_json(const ModelConfig& m);
ModelConfig model_from_json(const Json& j);
Json to_json(const RateConfig& r);
RateConfig rate_from_json(const Json& j);
Json to_json(const channel::ChannelConfig& c);
channel::ChannelConfig channel_from_json(const Json& j);
Json to_json(const BandwidthReport& r);

}  // namespace rdp
