#include "rdp/pipeline.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <c10/util/Logging.h>

#include "rdp/dataset.hpp"
#include "rdp/error.hpp"
#include "rdp/image_io.hpp"
#include "rdp/jscc.hpp"

namespace rdp {

Encoded transmitter(AnalysisTransform& analysis, HyperpriorEntropyModel& entropy, VrJscc& jscc,
                    const ModelConfig& model, const RateConfig& rate, const torch::Tensor& x,
                    const std::optional<MaskVector>& mask) {
  RDP_REQUIRE(x.dim() == 4 && x.size(0) == 1, "transmitter: expects one image (1, 3, H, W)");
  torch::NoGradGuard no_grad;
  Encoded e;
  e.y = analyze(analysis, x, model);
  e.latent_h = e.y.size(2);
  e.latent_w = e.y.size(3);
  const auto l = static_cast<std::size_t>(e.latent_h * e.latent_w);
  auto bits = entropy->estimate(e.y).bits.to(torch::kFloat64).contiguous();
  e.alloc = allocate_rates_from_bits(std::span<const double>(bits.data_ptr<double>(), l), rate);
  const MaskVector m = mask ? *mask : MaskVector::all(l);
  RDP_REQUIRE(m.size() == l, "transmitter: mask length must equal l = " + std::to_string(l));
  e.stream = jscc_encode(jscc, e.y, e.alloc, m, rate);
  return e;
}

RateAllocation transmitted_allocation(const RateAllocation& alloc, const MaskVector& mask) {
  RDP_REQUIRE(alloc.size() == mask.size(), "allocation and mask lengths differ");
  RateAllocation out = alloc;
  for (std::size_t i = 0; i < out.k.size(); ++i)
    if (!mask.m[i]) out.k[i] = 0;
  return out;
}

ChannelSymbolStream with_symbols(const ChannelSymbolStream& s, std::vector<float> symbols) {
  ChannelSymbolStream r{s.alloc, s.mask, std::move(symbols)};
  r.validate();
  return r;
}

torch::Tensor decode_dpct(DpctModel& model, const torch::Tensor& y_hat, const RealismMap& beta) {
  beta.validate();
  RDP_REQUIRE(beta.height() == y_hat.size(2) && beta.width() == y_hat.size(3),
              "realism map is " + std::to_string(beta.height()) + "x" + std::to_string(beta.width()) +
                  " but the latent grid is " + std::to_string(y_hat.size(2)) + "x" +
                  std::to_string(y_hat.size(3)));
  torch::NoGradGuard no_grad;
  auto g = model->srem->forward(beta.beta.unsqueeze(0).to(torch::kFloat32), beta.beta_max);
  return synthesize_dpct(model->generator, y_hat, g);
}

torch::Tensor decode_cct(CctModel& model, const torch::Tensor& y_hat, const InstanceLabelMap& map) {
  torch::NoGradGuard no_grad;
  auto feats = encode_label_map(model->label_encoder, map.to_tensor());
  return synthesize_cct(model->generator, y_hat, feats);
}

DpctTransmission pipeline_transmit_dpct(DpctModel& model, const torch::Tensor& x,
                                        const std::vector<RealismMap>& betas,
                                        const channel::Channel& channel, std::uint64_t stream_id) {
  model->eval();
  auto enc = transmitter(model->analysis, model->entropy, model->jscc, model->model_cfg, model->rate_cfg, x);
  DpctTransmission out;
  out.sent = enc.stream;
  auto t = channel.transmit(enc.stream.symbols, stream_id);
  out.received = with_symbols(enc.stream, std::move(t.received));
  out.y_hat = jscc_decode(model->jscc, out.received, model->rate_cfg, enc.latent_h, enc.latent_w);
  for (const auto& b : betas) out.reconstructions.push_back(decode_dpct(model, out.y_hat, b));
  out.report = compute_cbr(enc.alloc, static_cast<int>(x.size(3)), static_cast<int>(x.size(2)), model->rate_cfg);
  return out;
}

CctTransmission pipeline_transmit_cct(CctModel& model, const torch::Tensor& x, const InstanceLabelMap& map,
                                      const std::optional<std::set<std::string>>& prompts,
                                      const channel::Channel& channel, std::uint64_t stream_id) {
  model->eval();
  map.validate();
  RDP_REQUIRE(map.width == x.size(3) && map.height == x.size(2), "label map and image sizes differ");
  const int df = model->model_cfg.downsample_factor;
  CctTransmission out;
  std::optional<MaskVector> mask;
  if (prompts) {
    out.heatmap = heatmap_from_prompts(map, *prompts);
    mask = downsample_mask(out.heatmap, df);
  } else {
    out.heatmap = BinaryHeatmap{map.width, map.height,
                                std::vector<std::uint8_t>(static_cast<std::size_t>(map.width) * map.height, 1)};
  }
  auto enc = transmitter(model->analysis, model->entropy, model->jscc, model->model_cfg, model->rate_cfg, x, mask);
  out.sent = enc.stream;
  auto t = channel.transmit(enc.stream.symbols, stream_id);
  out.received = with_symbols(enc.stream, std::move(t.received));
  out.y_hat = jscc_decode(model->jscc, out.received, model->rate_cfg, enc.latent_h, enc.latent_w);
  out.reconstruction = decode_cct(model, out.y_hat, map);
  const auto owners = block_owners(map, df);
  out.report = compute_cbr(transmitted_allocation(enc.alloc, enc.stream.mask), map.width, map.height,
                           model->rate_cfg, owners, label_map_symbols(map, model->rate_cfg.bits_per_channel_symbol));
  return out;
}

std::string prompt_set_name(const std::vector<std::string>& prompts) {
  if (prompts.empty()) return "none";
  std::string s;
  for (const auto& p : prompts) s += (s.empty() ? "" : "+") + p;
  return s;
}

namespace {

struct Accumulator {
  double psnr = 0.0, perceptual = 0.0, cbr = 0.0;
  std::size_t n = 0;
  std::vector<torch::Tensor> real, fake;
};

std::string snr_name(double snr) {
  if (std::isinf(snr)) return "inf";
  std::ostringstream s;
  s << snr;
  return s.str();
}

void finish(SweepResult& res, std::map<std::pair<double, std::string>, Accumulator>& acc,
            const SweepOptions& opt, PerceptualMetric& metric) {
  for (auto& [key, a] : acc) {
    SweepRow row;
    row.image = "all";
    row.config = opt.config_name;
    row.snr_db = key.first;
    row.setting = key.second;
    row.psnr = a.psnr / static_cast<double>(a.n);
    row.perceptual = a.perceptual / static_cast<double>(a.n);
    row.cbr = a.cbr / static_cast<double>(a.n);
    row.fid = std::numeric_limits<double>::quiet_NaN();
    auto real = extract_patches(torch::cat(a.real), opt.patch_size, opt.patch_stride).patches;
    auto fake = extract_patches(torch::cat(a.fake), opt.patch_size, opt.patch_stride).patches;
    torch::NoGradGuard no_grad;
    auto fr = metric.features(real), ff = metric.features(fake);
    if (fr.size(0) > fr.size(1)) {
      row.fid = frechet_distance(fr, ff);
    } else {
      LOG(WARNING) << "sweep: " << fr.size(0) << " patches for " << fr.size(1)
                   << "-dim features, Frechet distance skipped";
    }
    res.rows.push_back(row);
  }
}

std::size_t image_count(const Dataset& data, const SweepOptions& opt) {
  RDP_REQUIRE(data.size() > 0, "sweep: empty dataset");
  return std::min(opt.images, data.size());
}

}  // namespace

SweepResult dp_sweep(DpctModel& model, const Dataset& data, const SweepOptions& opt, PerceptualMetric& metric,
                     long long* channel_uses) {
  SweepResult res;
  std::map<std::pair<double, std::string>, Accumulator> acc;
  const auto n = image_count(data, opt);
  long long uses = 0;
  for (double snr : opt.snrs_db) {
    channel::ChannelConfig cc;
    cc.kind = opt.kind;
    cc.snr_db = snr;
    cc.seed = opt.channel_seed;
    channel::Channel ch(cc);
    for (std::size_t i = 0; i < n; ++i) {
      auto x = data.get(i).image.unsqueeze(0);
      const auto h = x.size(2) / model->model_cfg.downsample_factor;
      const auto w = x.size(3) / model->model_cfg.downsample_factor;
      std::vector<RealismMap> maps;
      for (double b : opt.betas) maps.push_back(RealismMap::constant(h, w, b, model->model_cfg.beta_max));
      auto t = pipeline_transmit_dpct(model, x, maps, ch, i);
      for (std::size_t j = 0; j < maps.size(); ++j) {
        SweepRow row;
        row.image = std::to_string(i);
        row.config = opt.config_name;
        row.cbr = t.report.cbr;
        row.snr_db = snr;
        std::ostringstream s;
        s << "beta=" << opt.betas[j];
        row.setting = s.str();
        row.psnr = psnr(x, t.reconstructions[j]);
        torch::NoGradGuard no_grad;
        row.perceptual = metric.distance(x, t.reconstructions[j]).mean().item<double>();
        row.fid = std::numeric_limits<double>::quiet_NaN();
        auto& a = acc[{snr, row.setting}];
        a.psnr += row.psnr;
        a.perceptual += row.perceptual;
        a.cbr += row.cbr;
        ++a.n;
        a.real.push_back(x);
        a.fake.push_back(t.reconstructions[j]);
        res.rows.push_back(row);
      }
    }
    uses += ch.uses();
    LOG(INFO) << "sweep: snr " << snr_name(snr) << " dB done, " << ch.uses() << " channel uses";
  }
  finish(res, acc, opt, metric);
  if (channel_uses) *channel_uses = uses;
  return res;
}

SweepResult dp_sweep(CctModel& model, const Dataset& data, const SweepOptions& opt, PerceptualMetric& metric,
                     long long* channel_uses) {
  SweepResult res;
  std::map<std::pair<double, std::string>, Accumulator> acc;
  const auto n = image_count(data, opt);
  long long uses = 0;
  std::vector<std::vector<std::string>> ladder = opt.prompt_sets;
  if (ladder.empty()) ladder.push_back({});
  for (double snr : opt.snrs_db) {
    channel::ChannelConfig cc;
    cc.kind = opt.kind;
    cc.snr_db = snr;
    cc.seed = opt.channel_seed;
    channel::Channel ch(cc);
    for (std::size_t i = 0; i < n; ++i) {
      auto sample = data.get(i);
      RDP_REQUIRE(sample.labels.has_value(), "sweep: content-controlled models need label maps");
      auto x = sample.image.unsqueeze(0);
      for (const auto& prompts : ladder) {
        // Prompts naming labels absent from this image are skipped rather than rejected.
        std::set<std::string> present;
        for (const auto& p : prompts)
          if (sample.labels->has_label(p)) present.insert(p);
        auto t = pipeline_transmit_cct(model, x, *sample.labels, present, ch, i);
        SweepRow row;
        row.image = std::to_string(i);
        row.config = opt.config_name;
        row.cbr = t.report.cbr;
        row.snr_db = snr;
        row.setting = prompt_set_name(prompts);
        row.psnr = psnr(x, t.reconstruction);
        torch::NoGradGuard no_grad;
        row.perceptual = metric.distance(x, t.reconstruction).mean().item<double>();
        row.fid = std::numeric_limits<double>::quiet_NaN();
        auto& a = acc[{snr, row.setting}];
        a.psnr += row.psnr;
        a.perceptual += row.perceptual;
        a.cbr += row.cbr;
        ++a.n;
        a.real.push_back(x);
        a.fake.push_back(t.reconstruction);
        res.rows.push_back(row);
      }
    }
    uses += ch.uses();
  }
  finish(res, acc, opt, metric);
  if (channel_uses) *channel_uses = uses;
  return res;
}

}  // namespace rdp
