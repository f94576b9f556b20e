#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/channel.hpp"
#include "rdp/label_map.hpp"
#include "rdp/metrics.hpp"
#include "rdp/models.hpp"
#include "rdp/perceptual.hpp"
#include "rdp/srem.hpp"
#include "rdp/stream.hpp"

namespace rdp {

class Dataset;

/// Transmitter half for one image (1, 3, H, W): analysis, entropy model, rate allocation and
/// JSCC encoding under `mask`.
struct Encoded {
  torch::Tensor y;
  RateAllocation alloc;
  ChannelSymbolStream stream;
  int64_t latent_h = 0, latent_w = 0;
};
Encoded transmitter(AnalysisTransform& analysis, HyperpriorEntropyModel& entropy, VrJscc& jscc,
                    const ModelConfig& model, const RateConfig& rate, const torch::Tensor& x,
                    const std::optional<MaskVector>& mask = std::nullopt);

/// Allocation with k zeroed wherever the mask is off: what compute_cbr should see.
RateAllocation transmitted_allocation(const RateAllocation& alloc, const MaskVector& mask);

/// A stream with its symbols replaced by the channel output.
ChannelSymbolStream with_symbols(const ChannelSymbolStream& s, std::vector<float> symbols);

struct DpctTransmission {
  ChannelSymbolStream sent;
  ChannelSymbolStream received;
  torch::Tensor y_hat;
  std::vector<torch::Tensor> reconstructions;  // one (1, 3, H, W) per realism map
  BandwidthReport report;
};

/// One channel use; every realism map is decoded from the same received stream.
DpctTransmission pipeline_transmit_dpct(DpctModel& model, const torch::Tensor& x,
                                        const std::vector<RealismMap>& betas,
                                        const channel::Channel& channel, std::uint64_t stream_id);

/// Generator pass for an already recovered latent.
torch::Tensor decode_dpct(DpctModel& model, const torch::Tensor& y_hat, const RealismMap& beta);
torch::Tensor decode_cct(CctModel& model, const torch::Tensor& y_hat, const InstanceLabelMap& map);

struct CctTransmission {
  ChannelSymbolStream sent;
  ChannelSymbolStream received;
  torch::Tensor y_hat;
  torch::Tensor reconstruction;
  BinaryHeatmap heatmap;
  BandwidthReport report;
};

/// Content-controlled transmission. Without prompts every embedding is sent; with prompts
/// only the embeddings covered by their instances are (any-coverage rule). The report
/// breaks symbols down by block owner and charges the encoded label map.
CctTransmission pipeline_transmit_cct(CctModel& model, const torch::Tensor& x, const InstanceLabelMap& map,
                                      const std::optional<std::set<std::string>>& prompts,
                                      const channel::Channel& channel, std::uint64_t stream_id);

struct SweepOptions {
  std::vector<double> betas{0.0, 4.0, 8.0};
  std::vector<std::vector<std::string>> prompt_sets;
  std::vector<double> snrs_db{10.0};
  std::uint64_t channel_seed = 0;
  channel::Kind kind = channel::Kind::awgn;
  std::size_t images = 16;
  int patch_size = 32;
  int patch_stride = 16;
  std::string config_name = "model";
};

/// Per-image rows plus one "all" row per setting carrying mean PSNR, mean perceptual
/// distance and the patch Frechet distance (NaN when there are too few patches).
SweepResult dp_sweep(DpctModel& model, const Dataset& data, const SweepOptions& opt,
                     PerceptualMetric& metric, long long* channel_uses = nullptr);
SweepResult dp_sweep(CctModel& model, const Dataset& data, const SweepOptions& opt,
                     PerceptualMetric& metric, long long* channel_uses = nullptr);

/// "car+road", or "none" for the empty set.
std::string prompt_set_name(const std::vector<std::string>& prompts);

}  // namespace rdp
