#include "rdp/schedule.hpp"

#include "rdp/error.hpp"

namespace rdp {

Phase parse_phase(const std::string& s) {
  if (s == "rd_pretrain") return Phase::rd_pretrain;
  if (s == "rdp") return Phase::rdp;
  throw RejectedInput("unknown training phase '" + s + "'");
}

std::string to_string(Phase p) { return p == Phase::rd_pretrain ? "rd_pretrain" : "rdp"; }

void TrainingSchedule::validate() const {
  RDP_REQUIRE(total_steps > 0, "schedule: total_steps must be positive");
  RDP_REQUIRE(constant_map_fraction >= 0.0 && constant_map_fraction <= 1.0,
              "schedule: constant_map_fraction must lie in [0, 1]");
  RDP_REQUIRE(decay_start_fraction >= 0.0 && decay_start_fraction <= 1.0,
              "schedule: decay_start_fraction must lie in [0, 1]");
  RDP_REQUIRE(learning_rate > 0.0 && decay_factor > 0.0, "schedule: learning rate and decay must be positive");
  RDP_REQUIRE(batch_size > 0, "schedule: batch_size must be positive");
}

double TrainingSchedule::lr_at(long long step) const {
  return static_cast<double>(step) >= decay_start_fraction * static_cast<double>(total_steps)
             ? learning_rate * decay_factor
             : learning_rate;
}

RealismMap sample_realism_map(long long step, const TrainingSchedule& schedule, double beta_max,
                              int64_t h, int64_t w, std::mt19937_64& rng) {
  return RealismMap{sample_realism_batch(step, schedule, beta_max, 1, h, w, rng)[0], beta_max};
}

torch::Tensor sample_realism_batch(long long step, const TrainingSchedule& schedule, double beta_max,
                                   int64_t batch, int64_t h, int64_t w, std::mt19937_64& rng) {
  schedule.validate();
  RDP_REQUIRE(step >= 0 && step < schedule.total_steps, "sample_realism_map: step outside the schedule");
  RDP_REQUIRE(beta_max > 0.0, "sample_realism_map: beta_max must be positive");
  std::uniform_real_distribution<double> u(0.0, beta_max);
  const bool constant =
      static_cast<double>(step) < schedule.constant_map_fraction * static_cast<double>(schedule.total_steps);
  auto out = torch::empty({batch, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int64_t b = 0; b < batch; ++b) {
    const double c = constant ? u(rng) : 0.0;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) acc[b][i][j] = static_cast<float>(constant ? c : u(rng));
  }
  return out;
}

}  // namespace rdp
