#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/config.hpp"
#include "rdp/dataset.hpp"
#include "rdp/models.hpp"
#include "rdp/perceptual.hpp"
#include "rdp/schedule.hpp"

namespace rdp {

/// Output of the differentiable transmitter/channel/receiver chain on a batch.
struct LinkForward {
  torch::Tensor y;          // (B, c, h, w)
  torch::Tensor bits;       // (B, h, w) information content per embedding
  torch::Tensor codes;      // (B, l) rate codes actually used (0 where masked)
  torch::Tensor y_hat;      // (B, c, h, w)
  torch::Tensor nll_rate;   // (B) eta * (bits of transmitted embeddings + hyper bits) / (3HW)
  torch::Tensor cbr;        // (B) realized channel bandwidth ratio including side information
};

/// analyze -> entropy -> allocate -> encode -> channel -> decode on padded tensors.
/// `mask` (B, l) in {0, 1} optionally removes embeddings from the transmission.
LinkForward run_link(AnalysisTransform& analysis, HyperpriorEntropyModel& entropy, VrJscc& jscc,
                     const RateConfig& rate, const ModelConfig& model, const torch::Tensor& x,
                     const channel::ChannelConfig& channel, std::uint64_t first_stream,
                     const torch::Tensor& mask = {});

struct StepMetrics {
  std::string phase;
  long long step = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double mse = 0.0;
  double psnr = 0.0;
  double nll_rate = 0.0;
  double cbr = 0.0;
  double perception = 0.0;
  double lr = 0.0;
  std::optional<double> probe_psnr;
};

/// Two-phase trainer for either model family.
class Trainer {
public:
  Trainer(DpctModel model, AppConfig cfg, std::shared_ptr<Dataset> train, std::shared_ptr<Dataset> probe = nullptr);
  Trainer(CctModel model, AppConfig cfg, std::shared_ptr<Dataset> train, std::shared_ptr<Dataset> probe = nullptr);

  /// Runs one phase from scratch optimizers. RDP before RD pre-training is rejected.
  /// Writes metrics.csv rows and checkpoints under `out_dir` when it is non-empty.
  std::vector<StepMetrics> run(Phase phase, long long steps, const std::filesystem::path& out_dir = {});

  /// Marks the RD phase as done (e.g. after loading a pre-trained checkpoint).
  void mark_pretrained() { pretrained_ = true; }
  bool pretrained() const { return pretrained_; }

  /// PSNR over the probe set with the noiseless-equivalent deterministic path (beta = 0).
  double probe_psnr();

  torch::nn::Module& module();
  CheckpointMeta meta(Phase phase, long long step) const;

private:
  StepMetrics step(Phase phase, long long step, const TrainingSchedule& sched, torch::optim::Adam& opt_g,
                   torch::optim::Adam* opt_d);
  std::vector<torch::Tensor> generator_params() const;
  std::vector<torch::Tensor> discriminator_params() const;
  channel::ChannelConfig step_channel() const;

  Mode mode_;
  DpctModel dpct_{nullptr};
  CctModel cct_{nullptr};
  AppConfig cfg_;
  std::shared_ptr<Dataset> train_, probe_;
  std::shared_ptr<PerceptualMetric> perceptual_;
  BatchSampler sampler_;
  std::mt19937_64 schedule_rng_;
  std::uint64_t channel_stream_ = 0;
  bool pretrained_ = false;
  long long global_step_ = 0;
};

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const StepMetrics& m);

}  // namespace rdp
