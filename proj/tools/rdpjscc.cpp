// Command-line entry point: train / eval / sweep / transmit / serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <c10/util/Logging.h>

#include "rdp/config.hpp"
#include "rdp/dataset.hpp"
#include "rdp/error.hpp"
#include "rdp/image_io.hpp"
#include "rdp/models.hpp"
#include "rdp/pipeline.hpp"
#include "rdp/service.hpp"
#include "rdp/trainer.hpp"

namespace fs = std::filesystem;
using namespace rdp;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  bool verbose = false;
};

AppConfig resolve(const Common& c) {
  Json doc = Json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw RejectedInput("cannot open config file " + c.config);
    try {
      doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw RejectedInput("config " + c.config + ": " + e.what());
    }
  }
  apply_overrides(doc, c.overrides);
  return config_from_json(doc);
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

void write_bytes(const fs::path& p, std::span<const std::uint8_t> b) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

int cmd_train(const AppConfig& cfg, const std::string& phase, const std::string& resume) {
  const fs::path out = cfg.train.out_dir;
  fs::create_directories(out);
  write_text(out / "config.json", config_to_json(cfg).dump(2) + "\n");
  torch::manual_seed(cfg.train.seed);
  auto train = std::shared_ptr<Dataset>(make_dataset(cfg.data, false));
  auto probe = std::shared_ptr<Dataset>(make_dataset(cfg.data, true));
  LOG(INFO) << "train: " << train->size() << " training images, " << probe->size() << " held out";

  auto go = [&](auto model) {
    if (!resume.empty()) {
      auto meta = load_checkpoint(resume, *model);
      require_compatible(meta, cfg.mode, cfg.preset);
    }
    Trainer t(model, cfg, train, probe);
    if (!resume.empty()) t.mark_pretrained();
    if (phase == "rd" || phase == "all") t.run(Phase::rd_pretrain, cfg.train.rd_steps, out);
    if (phase == "rdp" || phase == "all") t.run(Phase::rdp, cfg.train.rdp_steps, out);
  };
  if (cfg.mode == Mode::dpct) go(DpctModel(cfg.model, cfg.rate));
  else go(CctModel(cfg.model, cfg.rate));
  LOG(INFO) << "train: checkpoints and metrics.csv written to " << out;
  return 0;
}

SweepOptions sweep_options(const AppConfig& cfg) {
  SweepOptions o;
  o.betas = cfg.eval.betas;
  o.prompt_sets = cfg.eval.prompt_sets;
  o.snrs_db = cfg.eval.snrs_db;
  o.channel_seed = cfg.channel.seed;
  o.kind = cfg.channel.kind;
  o.images = static_cast<std::size_t>(cfg.eval.images);
  o.patch_size = cfg.eval.patch_size;
  o.patch_stride = cfg.eval.patch_stride;
  return o;
}

SweepResult sweep_one(const AppConfig& cfg, const std::string& ckpt, const Dataset& data, PerceptualMetric& metric) {
  auto opt = sweep_options(cfg);
  opt.config_name = fs::path(ckpt).stem().string();
  const auto meta = read_checkpoint_meta(ckpt);
  require_compatible(meta, cfg.mode, cfg.preset);
  if (meta.mode == Mode::dpct) {
    auto m = load_dpct(ckpt);
    return dp_sweep(m, data, opt, metric);
  }
  auto m = load_cct(ckpt);
  return dp_sweep(m, data, opt, metric);
}

void print_summary(const SweepResult& r) {
  for (const auto& row : r.rows) {
    if (row.image != "all") continue;
    std::cout << row.config << "  snr " << row.snr_db << "  " << row.setting << "  cbr " << row.cbr << "  psnr "
              << row.psnr << "  perceptual " << row.perceptual << "  fid " << row.fid << "\n";
  }
}

int cmd_sweep(const AppConfig& cfg, std::vector<std::string> checkpoints) {
  if (checkpoints.empty()) checkpoints = cfg.eval.checkpoints;
  RDP_REQUIRE(!checkpoints.empty(), "sweep: no checkpoints given (eval.checkpoints or --checkpoint)");
  auto data = make_dataset(cfg.data, true);
  auto metric = default_perceptual_metric();
  SweepResult all;
  for (const auto& c : checkpoints) {
    auto r = sweep_one(cfg, c, *data, *metric);
    all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
  }
  std::ostringstream csv;
  all.write_csv(csv);
  write_text(cfg.eval.output, csv.str());
  print_summary(all);
  LOG(INFO) << "sweep: " << all.rows.size() << " rows written to " << cfg.eval.output;
  return 0;
}

torch::Tensor load_image(const std::string& path) { return rgb_to_tensor(read_png(path)).unsqueeze(0); }

int cmd_transmit(const AppConfig& cfg) {
  const auto& t = cfg.transmit;
  RDP_REQUIRE(!t.checkpoint.empty(), "transmit: transmit.checkpoint is required");
  RDP_REQUIRE(!t.image.empty(), "transmit: transmit.image is required");
  const fs::path out = t.output_dir;
  fs::create_directories(out);
  const auto meta = read_checkpoint_meta(t.checkpoint);
  require_compatible(meta, cfg.mode, cfg.preset);
  auto x = load_image(t.image);
  channel::Channel ch(cfg.channel);
  BandwidthReport report;
  if (cfg.mode == Mode::dpct) {
    auto m = load_dpct(t.checkpoint);
    const auto h = x.size(2) / m->model_cfg.downsample_factor, w = x.size(3) / m->model_cfg.downsample_factor;
    std::vector<RealismMap> maps;
    std::vector<std::string> names;
    if (!t.realism_map.empty()) {
      std::ifstream in(t.realism_map);
      RDP_REQUIRE(static_cast<bool>(in), "transmit: cannot open realism map " + t.realism_map);
      maps.push_back(read_realism_map(in));
      names.push_back("map");
    } else {
      for (double b : cfg.eval.betas) {
        maps.push_back(RealismMap::constant(h, w, b, m->model_cfg.beta_max));
        std::ostringstream s;
        s << "beta" << b;
        names.push_back(s.str());
      }
    }
    auto r = pipeline_transmit_dpct(m, x, maps, ch, t.stream_id);
    for (std::size_t i = 0; i < maps.size(); ++i) {
      write_png(out / (names[i] + ".png"), tensor_to_rgb(r.reconstructions[i][0]));
      std::cout << names[i] << ": psnr " << psnr(x, r.reconstructions[i]) << " dB\n";
    }
    write_bytes(out / "received.bin", serialize_stream(r.received, m->rate_cfg));
    report = r.report;
  } else {
    RDP_REQUIRE(!t.label_map.empty() && !t.registry.empty(),
                "transmit: content-controlled mode needs transmit.label_map and transmit.registry");
    auto m = load_cct(t.checkpoint);
    auto raster = read_png(t.label_map);
    auto map = InstanceLabelMap::from_rgb(raster.pixels, raster.width, raster.height, read_registry_json(t.registry));
    std::optional<std::set<std::string>> prompts;
    if (!t.prompts.empty()) prompts = std::set<std::string>(t.prompts.begin(), t.prompts.end());
    auto r = pipeline_transmit_cct(m, x, map, prompts, ch, t.stream_id);
    write_png(out / "reconstruction.png", tensor_to_rgb(r.reconstruction[0]));
    write_bytes(out / "received.bin", serialize_stream(r.received, m->rate_cfg));
    write_bytes(out / "labelmap.rle", encode_label_map_rle(map));
    std::cout << "psnr " << psnr(x, r.reconstruction) << " dB\n";
    report = r.report;
  }
  write_text(out / "report.json", to_json(report).dump(2) + "\n");
  std::cout << "cbr " << report.cbr << " (" << report.symbol_count << " symbols, " << report.side_info_symbols
            << " side-info symbols)\n";
  return 0;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const AppConfig& cfg) {
  const auto& s = cfg.serve;
  std::optional<DpctModel> dpct;
  std::optional<CctModel> cct;
  if (!s.dpct_checkpoint.empty()) {
    require_compatible(read_checkpoint_meta(s.dpct_checkpoint), Mode::dpct, cfg.preset);
    dpct = load_dpct(s.dpct_checkpoint);
  }
  if (!s.cct_checkpoint.empty()) {
    require_compatible(read_checkpoint_meta(s.cct_checkpoint), Mode::cct, cfg.preset);
    cct = load_cct(s.cct_checkpoint);
  }
  RDP_REQUIRE(dpct || cct, "serve: set serve.dpct_checkpoint and/or serve.cct_checkpoint");
  SessionService service(cfg, dpct, cct);
  httplib::Server server;
  install_routes(server, service);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  LOG(INFO) << "serve: listening on " << s.host << ":" << s.port;
  std::cout << "listening on " << s.host << ":" << s.port << std::endl;
  if (!server.listen(s.host, s.port)) {
    std::cerr << "serve: cannot bind " << s.host << ":" << s.port << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-distortion-perception JSCC: training, evaluation, transmission and session service"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("-s,--set", common.overrides, "override a config key: dotted.key=value (repeatable)");
  app.add_flag("-v,--verbose", common.verbose, "log progress");

  auto* train = app.add_subcommand("train", "two-phase training (RD pre-training, then RDP)");
  std::string phase = "all", resume;
  train->add_option("--phase", phase, "rd, rdp or all")->check(CLI::IsMember({"rd", "rdp", "all"}));
  train->add_option("--resume", resume, "start from this checkpoint (counts as pre-trained)");

  std::vector<std::string> ckpts;
  auto* eval = app.add_subcommand("eval", "evaluate one checkpoint on the held-out set");
  eval->add_option("--checkpoint", ckpts, "checkpoint file");
  auto* sweep = app.add_subcommand("sweep", "distortion-perception sweep over checkpoints, SNRs and settings");
  sweep->add_option("--checkpoint", ckpts, "checkpoint files (default: eval.checkpoints)");

  app.add_subcommand("transmit", "send one image and write reconstructions plus a bandwidth report");
  app.add_subcommand("serve", "run the interactive session service");

  CLI11_PARSE(app, argc, argv);
  FLAGS_caffe2_log_level = common.verbose ? 0 : 1;

  try {
    const auto cfg = resolve(common);
    if (*train) return cmd_train(cfg, phase, resume);
    if (*eval) {
      RDP_REQUIRE(ckpts.size() <= 1, "eval: pass at most one --checkpoint (use sweep for several)");
      return cmd_sweep(cfg, ckpts);
    }
    if (*sweep) return cmd_sweep(cfg, ckpts);
    if (app.got_subcommand("transmit")) return cmd_transmit(cfg);
    if (app.got_subcommand("serve")) return cmd_serve(cfg);
  } catch (const RejectedInput& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return 2;
  } catch (const NotFound& e) {
    std::cerr << "not found: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
