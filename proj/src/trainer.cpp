#include "rdp/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include <c10/util/Logging.h>

#include "rdp/error.hpp"
#include "rdp/label_map.hpp"
#include "rdp/losses.hpp"

namespace rdp {

namespace {

constexpr std::uint64_t kProbeStream = std::uint64_t{1} << 48;

torch::Tensor per_image_psnr(const torch::Tensor& x, const torch::Tensor& x_hat) {
  auto m = (x - x_hat).square().flatten(1).mean(1).clamp_min(1e-10);
  return -10.0 * torch::log10(m);
}

std::mt19937_64 split_seed(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& g : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(g.options()).lr(lr);
}

void set_requires_grad(const std::vector<torch::Tensor>& params, bool on) {
  for (auto p : params) p.requires_grad_(on);
}

}  // namespace

LinkForward run_link(AnalysisTransform& analysis, HyperpriorEntropyModel& entropy, VrJscc& jscc,
                     const RateConfig& rate, const ModelConfig& model, const torch::Tensor& x,
                     const channel::ChannelConfig& channel, std::uint64_t first_stream,
                     const torch::Tensor& mask) {
  check_image(x, model.downsample_factor);
  LinkForward f;
  f.y = analysis->forward(x);
  const auto h = f.y.size(2), w = f.y.size(3), l = h * w;
  auto ent = entropy->estimate(f.y);
  f.bits = ent.bits;
  f.codes = rate_codes_from_bits(f.bits, rate);
  if (mask.defined()) {
    RDP_REQUIRE(mask.sizes() == f.codes.sizes(), "run_link: mask must be (B, l)");
    f.codes = f.codes * mask.to(torch::kInt64);
  }
  auto valid = jscc->valid_slots(f.codes);
  auto sent = jscc->encode_padded(f.y, f.codes);
  auto received = simulate_channel_padded(sent, valid, channel, first_stream);
  f.y_hat = jscc->decode_padded(received, f.codes, h, w);

  const double source = 3.0 * static_cast<double>(x.size(2) * x.size(3));
  auto keep = (f.codes > 0).to(f.bits.dtype());
  f.nll_rate = rate.eta * ((f.bits.flatten(1) * keep).sum(1) + ent.side_bits) / source;
  const double side = static_cast<double>(l) * rate.side_info_bits_per_embedding / rate.bits_per_channel_symbol;
  f.cbr = (valid.sum({1, 2}).to(torch::kFloat64) + side) / source;
  return f;
}

// ---------------------------------------------------------------------------------------------

Trainer::Trainer(DpctModel model, AppConfig cfg, std::shared_ptr<Dataset> train, std::shared_ptr<Dataset> probe)
    : mode_(Mode::dpct),
      dpct_(std::move(model)),
      cfg_(std::move(cfg)),
      train_(std::move(train)),
      probe_(std::move(probe)),
      perceptual_(default_perceptual_metric()),
      sampler_(train_->size(), cfg_.train.seed * 3 + 1),
      schedule_rng_(split_seed(cfg_.train.seed, 2)) {}

Trainer::Trainer(CctModel model, AppConfig cfg, std::shared_ptr<Dataset> train, std::shared_ptr<Dataset> probe)
    : mode_(Mode::cct),
      cct_(std::move(model)),
      cfg_(std::move(cfg)),
      train_(std::move(train)),
      probe_(std::move(probe)),
      perceptual_(default_perceptual_metric()),
      sampler_(train_->size(), cfg_.train.seed * 3 + 1),
      schedule_rng_(split_seed(cfg_.train.seed, 2)) {}

torch::nn::Module& Trainer::module() {
  return mode_ == Mode::dpct ? static_cast<torch::nn::Module&>(*dpct_) : static_cast<torch::nn::Module&>(*cct_);
}

std::vector<torch::Tensor> Trainer::generator_params() const {
  return mode_ == Mode::dpct ? dpct_->generator_side_parameters() : cct_->generator_side_parameters();
}

std::vector<torch::Tensor> Trainer::discriminator_params() const {
  return mode_ == Mode::dpct ? dpct_->discriminator_parameters() : cct_->discriminator_parameters();
}

channel::ChannelConfig Trainer::step_channel() const {
  auto c = cfg_.channel;
  // Channel draws get their own seed stream, independent of data order.
  c.seed = cfg_.channel.seed ^ (cfg_.train.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  return c;
}

CheckpointMeta Trainer::meta(Phase phase, long long step) const {
  CheckpointMeta m;
  m.mode = mode_;
  m.model = cfg_.model;
  m.rate = cfg_.rate;
  m.phase = to_string(phase);
  m.step = step;
  return m;
}

StepMetrics Trainer::step(Phase phase, long long step, const TrainingSchedule& sched, torch::optim::Adam& opt_g,
                          torch::optim::Adam* opt_d) {
  const auto idx = sampler_.next(static_cast<std::size_t>(sched.batch_size));
  auto batch = make_batch(*train_, idx);
  const auto x = batch.images;
  const auto B = x.size(0);
  const auto df = cfg_.model.downsample_factor;
  const auto h = x.size(2) / df, w = x.size(3) / df;
  const auto& W = cfg_.loss;
  const bool rdp = phase == Phase::rdp;

  StepMetrics m;
  m.phase = to_string(phase);
  m.step = step;
  m.lr = sched.lr_at(step);
  set_lr(opt_g, m.lr);
  if (opt_d) set_lr(*opt_d, m.lr);

  module().train();
  const auto ch = step_channel();
  const auto stream = channel_stream_;
  channel_stream_ += static_cast<std::uint64_t>(B);

  torch::Tensor x_hat, loss_g, d_cond, pixel_mask;
  LinkForward f;
  if (mode_ == Mode::dpct) {
    auto& M = *dpct_;
    f = run_link(M.analysis, M.entropy, M.jscc, cfg_.rate, cfg_.model, x, ch, stream);
    if (!rdp) {
      x_hat = M.generator->forward(f.y_hat, nullptr);
      loss_g = loss_rd(x, x_hat, f.nll_rate, W);
    } else {
      auto beta = sample_realism_batch(step, sched, cfg_.model.beta_max, B, h, w, schedule_rng_);
      auto feats = M.srem->forward(beta, cfg_.model.beta_max);
      x_hat = M.generator->forward(f.y_hat, &feats);
      d_cond = f.y.detach();
      set_requires_grad(discriminator_params(), false);
      auto d_fake = M.discriminator->forward(x_hat, d_cond);
      auto lp = perceptual_->spatial_map(x, x_hat, h, w);
      loss_g = loss_dpct(x, x_hat, f.nll_rate, d_fake, lp, beta, W);
      m.perception = (beta * (-torch::log(d_fake.clamp(W.epsilon, 1.0)) + W.c_p * lp)).mean().item<double>();
      set_requires_grad(discriminator_params(), true);
    }
  } else {
    auto& M = *cct_;
    RDP_REQUIRE(batch.labels.size() == static_cast<std::size_t>(B), "cct training needs label maps");
    std::vector<torch::Tensor> label_t;
    for (const auto& lm : batch.labels) label_t.push_back(lm.to_tensor()[0]);
    auto labels = torch::stack(label_t);
    torch::Tensor mask;
    if (rdp) {
      std::vector<torch::Tensor> pix, lat;
      for (const auto& lm : batch.labels) {
        auto sel = sample_instance_mask(lm, cfg_.train.mask_fraction, schedule_rng_);
        pix.push_back(sel.heatmap.to_tensor()[0]);
        const auto my = downsample_mask(sel.heatmap, df);
        lat.push_back(torch::tensor(std::vector<int64_t>(my.m.begin(), my.m.end()), torch::kInt64));
      }
      pixel_mask = torch::stack(pix);
      mask = torch::stack(lat);
    }
    f = run_link(M.analysis, M.entropy, M.jscc, cfg_.rate, cfg_.model, x, ch, stream, mask);
    x_hat = M.generator->forward(f.y_hat, M.label_encoder->forward(labels));
    if (!rdp) {
      loss_g = loss_rd(x, x_hat, f.nll_rate, W);
    } else {
      d_cond = labels;
      set_requires_grad(discriminator_params(), false);
      auto d_fake = M.discriminator->forward(x_hat, d_cond);
      auto lp = perceptual_->distance(x, x_hat);
      loss_g = loss_cct(x, x_hat, f.nll_rate, d_fake, lp, pixel_mask, W);
      m.perception = (W.beta_scalar * (-torch::log(d_fake.clamp(W.epsilon, 1.0)).mean() + W.c_p * lp.mean())).item<double>();
      set_requires_grad(discriminator_params(), true);
    }
  }

  opt_g.zero_grad();
  loss_g.backward();
  opt_g.step();

  if (rdp && opt_d) {
    auto& D = mode_ == Mode::dpct ? dpct_->discriminator : cct_->discriminator;
    auto d_fake = D->forward(x_hat.detach(), d_cond);
    auto d_real = D->forward(x, d_cond);
    auto loss_d = loss_discriminator(d_fake, d_real, W.epsilon);
    opt_d->zero_grad();
    loss_d.backward();
    opt_d->step();
    m.loss_d = loss_d.item<double>();
  }

  torch::NoGradGuard no_grad;
  m.loss_g = loss_g.item<double>();
  m.mse = mse(x, x_hat).item<double>();
  m.psnr = per_image_psnr(x, x_hat.clamp(0.0, 1.0)).mean().item<double>();
  m.nll_rate = f.nll_rate.mean().item<double>();
  m.cbr = f.cbr.mean().item<double>();
  return m;
}

double Trainer::probe_psnr() {
  if (!probe_) return std::nan("");
  torch::NoGradGuard no_grad;
  module().eval();
  const auto n = std::min<std::size_t>(probe_->size(), static_cast<std::size_t>(std::max(1, cfg_.train.probe_images)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  auto batch = make_batch(*probe_, idx);
  const auto x = batch.images;
  torch::Tensor x_hat;
  if (mode_ == Mode::dpct) {
    auto& M = *dpct_;
    auto f = run_link(M.analysis, M.entropy, M.jscc, cfg_.rate, cfg_.model, x, step_channel(), kProbeStream);
    auto feats = M.srem->forward(torch::zeros({x.size(0), f.y.size(2), f.y.size(3)}), cfg_.model.beta_max);
    x_hat = M.generator->forward(f.y_hat, pretrained_ ? &feats : nullptr);
  } else {
    auto& M = *cct_;
    std::vector<torch::Tensor> label_t;
    for (const auto& lm : batch.labels) label_t.push_back(lm.to_tensor()[0]);
    auto f = run_link(M.analysis, M.entropy, M.jscc, cfg_.rate, cfg_.model, x, step_channel(), kProbeStream);
    x_hat = M.generator->forward(f.y_hat, M.label_encoder->forward(torch::stack(label_t)));
  }
  return per_image_psnr(x, x_hat.clamp(0.0, 1.0)).mean().item<double>();
}

std::vector<StepMetrics> Trainer::run(Phase phase, long long steps, const std::filesystem::path& out_dir) {
  if (phase == Phase::rdp && !pretrained_)
    throw RejectedInput("training: the rdp phase requires a completed rd_pretrain phase");
  RDP_REQUIRE(steps > 0, "training: step count must be positive");
  torch::AutoGradMode grad_on(true);
  TrainingSchedule sched;
  sched.phase = phase;
  sched.total_steps = steps;
  sched.batch_size = cfg_.train.batch_size;
  sched.learning_rate = cfg_.train.learning_rate;
  sched.decay_factor = cfg_.train.decay_factor;
  sched.decay_start_fraction = cfg_.train.decay_start_fraction;
  sched.constant_map_fraction = cfg_.train.constant_map_fraction;
  sched.validate();

  torch::optim::Adam opt_g(generator_params(), torch::optim::AdamOptions(sched.learning_rate));
  std::unique_ptr<torch::optim::Adam> opt_d;
  if (phase == Phase::rdp)
    opt_d = std::make_unique<torch::optim::Adam>(discriminator_params(), torch::optim::AdamOptions(sched.learning_rate));

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "checkpoints");
    const auto path = out_dir / "metrics.csv";
    const bool fresh = !std::filesystem::exists(path);
    csv.open(path, std::ios::app);
    if (fresh) write_metrics_header(csv);
  }

  std::vector<StepMetrics> history;
  history.reserve(static_cast<std::size_t>(steps));
  const auto log_every = std::max<long long>(1, cfg_.train.log_every);
  for (long long s = 0; s < steps; ++s) {
    auto m = step(phase, s, sched, opt_g, opt_d.get());
    ++global_step_;
    const bool last = s + 1 == steps;
    if ((s % (10 * log_every) == 0 || last) && probe_) {
      m.probe_psnr = probe_psnr();
      LOG(INFO) << to_string(phase) << " step " << s << "/" << steps << " loss " << m.loss_g << " psnr " << m.psnr
                << " probe " << *m.probe_psnr << " cbr " << m.cbr;
    }
    if (csv.is_open() && (s % log_every == 0 || last)) write_metrics_row(csv, m);
    if (!out_dir.empty() && cfg_.train.checkpoint_every > 0 && (s + 1) % cfg_.train.checkpoint_every == 0 && !last) {
      save_checkpoint(out_dir / "checkpoints" / (to_string(phase) + "_step" + std::to_string(s + 1) + ".pt"), module(),
                      meta(phase, s + 1));
    }
    history.push_back(std::move(m));
  }
  if (phase == Phase::rd_pretrain) pretrained_ = true;
  if (!out_dir.empty()) save_checkpoint(out_dir / (to_string(phase) + "_final.pt"), module(), meta(phase, steps));
  module().eval();
  return history;
}

void write_metrics_header(std::ostream& os) {
  os << "phase,step,loss_g,loss_d,mse,psnr,nll_rate,cbr,perception,lr,probe_psnr\n";
}

void write_metrics_row(std::ostream& os, const StepMetrics& m) {
  os << m.phase << ',' << m.step << ',' << std::setprecision(8) << m.loss_g << ',' << m.loss_d << ',' << m.mse << ','
     << m.psnr << ',' << m.nll_rate << ',' << m.cbr << ',' << m.perception << ',' << m.lr << ',';
  if (m.probe_psnr) os << *m.probe_psnr;
  os << '\n';
}

}  // namespace rdp
