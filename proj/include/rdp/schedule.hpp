#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <torch/torch.h>

#include "rdp/srem.hpp"

namespace rdp {

enum class Phase { rd_pretrain, rdp };

Phase parse_phase(const std::string& s);
std::string to_string(Phase p);

struct TrainingSchedule {
  Phase phase = Phase::rd_pretrain;
  long long total_steps = 1000;
  /// Leading share of steps that use spatially constant realism maps.
  double constant_map_fraction = 0.8;
  double learning_rate = 1e-4;
  double decay_factor = 0.1;
  /// The learning rate is multiplied by decay_factor from this share of steps onwards.
  double decay_start_fraction = 0.5;
  int batch_size = 8;

  void validate() const;
  double lr_at(long long step) const;
};

/// Constant map b * 1 with b ~ U[0, beta_max] during the constant phase, otherwise
/// independent U[0, beta_max] per cell.
RealismMap sample_realism_map(long long step, const TrainingSchedule& schedule, double beta_max,
                              int64_t h, int64_t w, std::mt19937_64& rng);

/// One independently drawn map per batch element, stacked to (B, h, w).
torch::Tensor sample_realism_batch(long long step, const TrainingSchedule& schedule, double beta_max,
                                   int64_t batch, int64_t h, int64_t w, std::mt19937_64& rng);

}  // namespace rdp
