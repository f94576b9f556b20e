#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/codec.hpp"
#include "rdp/config.hpp"
#include "rdp/entropy.hpp"
#include "rdp/jscc.hpp"
#include "rdp/rate.hpp"
#include "rdp/srem.hpp"

namespace rdp {

/// Shared transmitter/receiver parts: analysis, entropy model, VR-JSCC.
struct LinkParts {
  AnalysisTransform analysis{nullptr};
  HyperpriorEntropyModel entropy{nullptr};
  VrJscc jscc{nullptr};
};

/// Distortion-perception controllable transmission model.
class DpctModelImpl : public torch::nn::Module {
public:
  DpctModelImpl(const ModelConfig& model, const RateConfig& rate);

  ModelConfig model_cfg;
  RateConfig rate_cfg;
  AnalysisTransform analysis{nullptr};
  HyperpriorEntropyModel entropy{nullptr};
  VrJscc jscc{nullptr};
  Srem srem{nullptr};
  ConditionalGenerator generator{nullptr};
  PatchDiscriminator discriminator{nullptr};

  LinkParts link() const { return {analysis, entropy, jscc}; }
  std::vector<torch::Tensor> generator_side_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const { return discriminator->parameters(); }
};
TORCH_MODULE(DpctModel);

/// Content-controllable transmission model.
class CctModelImpl : public torch::nn::Module {
public:
  CctModelImpl(const ModelConfig& model, const RateConfig& rate);

  ModelConfig model_cfg;
  RateConfig rate_cfg;
  AnalysisTransform analysis{nullptr};
  HyperpriorEntropyModel entropy{nullptr};
  VrJscc jscc{nullptr};
  LabelMapEncoder label_encoder{nullptr};
  LabelConditionedGenerator generator{nullptr};
  PatchDiscriminator discriminator{nullptr};

  LinkParts link() const { return {analysis, entropy, jscc}; }
  std::vector<torch::Tensor> generator_side_parameters() const;
  std::vector<torch::Tensor> discriminator_parameters() const { return discriminator->parameters(); }
};
TORCH_MODULE(CctModel);

struct CheckpointMeta {
  Mode mode = Mode::dpct;
  ModelConfig model;
  RateConfig rate;
  std::string phase = "init";
  long long step = 0;

  Json to_json() const;
  static CheckpointMeta from_json(const Json& j);
};

/// One file: every named parameter and buffer plus a JSON metadata record.
void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& model, const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Loads into an already constructed model; rejects missing or mis-shaped tensors.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, torch::nn::Module& model);

DpctModel load_dpct(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);
CctModel load_cct(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

/// Throws RejectedInput when a checkpoint was written for a different preset or mode.
void require_compatible(const CheckpointMeta& meta, Mode mode, const std::string& preset);

}  // namespace rdp
