#include "rdp/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rdp/error.hpp"

namespace rdp {

namespace {

/// Reads keys from one JSON object and remembers which ones were never consumed.
class Section {
public:
  Section(const Json& j, std::string path, std::vector<std::string>& unknown)
      : j_(j), path_(std::move(path)), unknown_(unknown) {
    if (!j_.is_object()) throw RejectedInput("config: '" + (path_.empty() ? "<root>" : path_) + "' must be an object");
  }
  ~Section() {
    for (const auto& [key, value] : j_.items())
      if (!used_.count(key)) unknown_.push_back(path_.empty() ? key : path_ + "." + key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw RejectedInput("config: bad value for '" + qualified(key) + "': " + e.what());
    }
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(j_.at(key), qualified(key), unknown_);
  }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
  const Json& j_;
  std::string path_;
  std::vector<std::string>& unknown_;
  std::set<std::string> used_;
};

double snr_from_json(const Json& v, const std::string& where) {
  if (v.is_null()) return channel::ChannelConfig::noiseless;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "noiseless") return channel::ChannelConfig::noiseless;
    throw RejectedInput("config: " + where + " must be a number, \"inf\" or \"noiseless\"");
  }
  return v.get<double>();
}

Json snr_to_json(double snr) { return std::isinf(snr) ? Json("inf") : Json(snr); }

void read_model(Section s, ModelConfig& m) {
  s.get("preset", m.preset);
  s.get("channels", m.channels);
  s.get("bottleneck", m.bottleneck);
  s.get("downsample_factor", m.downsample_factor);
  s.get("cond_rb_count", m.cond_rb_count);
  s.get("stage_widths", m.stage_widths);
  s.get("jscc_blocks", m.jscc_blocks);
  s.get("jscc_heads", m.jscc_heads);
  s.get("jscc_mlp_ratio", m.jscc_mlp_ratio);
  s.get("hyper_channels", m.hyper_channels);
  s.get("label_channels", m.label_channels);
  s.get("disc_width", m.disc_width);
  s.get("attention", m.attention);
  s.get("p_max", m.p_max);
  s.get("beta_max", m.beta_max);
}

void read_rate(Section s, RateConfig& r) {
  std::string preset;
  s.get("preset", preset);
  if (preset == "paper") r = RateConfig::paper();
  else if (preset == "toy") r = RateConfig::toy();
  else if (!preset.empty()) throw RejectedInput("config: unknown rate preset '" + preset + "'");
  s.get("eta", r.eta);
  s.get("grid", r.grid);
  s.get("side_info_bits_per_embedding", r.side_info_bits_per_embedding);
  s.get("bits_per_channel_symbol", r.bits_per_channel_symbol);
}

void read_channel(Section s, channel::ChannelConfig& c) {
  std::string kind = channel::to_string(c.kind), eq = channel::to_string(c.equalization);
  s.get("kind", kind);
  s.get("equalization", eq);
  c.kind = channel::parse_kind(kind);
  c.equalization = channel::parse_equalization(eq);
  Json snr;
  s.get("snr_db", snr);
  if (!snr.is_null() || s.has("snr_db")) c.snr_db = snr_from_json(snr, s.qualified("snr_db"));
  s.get("seed", c.seed);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "dpct") return Mode::dpct;
  if (s == "cct") return Mode::cct;
  throw RejectedInput("unknown mode '" + s + "' (expected dpct or cct)");
}

std::string to_string(Mode m) { return m == Mode::dpct ? "dpct" : "cct"; }

void DatasetSpec::validate(int downsample_factor) const {
  RDP_REQUIRE(kind == "synthetic" || kind == "directory", "data: kind must be synthetic or directory");
  RDP_REQUIRE(kind != "directory" || !directory.empty(), "data: directory datasets need a directory");
  RDP_REQUIRE(crop_size > 0 && crop_size % downsample_factor == 0,
              "data: crop_size must be a positive multiple of the downsample factor");
  RDP_REQUIRE(resize == "crop" || resize == "downscale", "data: resize must be crop or downscale");
  RDP_REQUIRE(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "data: holdout_fraction must lie in [0, 1)");
  RDP_REQUIRE(synthetic_count > 0 && holdout_count >= 0, "data: counts must be positive");
}

void AppConfig::validate() const {
  model.validate();
  rate.validate();
  channel.validate();
  loss.validate();
  data.validate(model.downsample_factor);
  RDP_REQUIRE(train.rd_steps >= 0 && train.rdp_steps >= 0, "train: step counts must be nonnegative");
  RDP_REQUIRE(train.batch_size > 0, "train: batch_size must be positive");
  RDP_REQUIRE(train.mask_fraction > 0.0 && train.mask_fraction <= 1.0, "train: mask_fraction must lie in (0, 1]");
  for (double b : eval.betas)
    RDP_REQUIRE(b >= 0.0 && b <= model.beta_max, "eval: betas must lie in [0, beta_max]");
  RDP_REQUIRE(eval.patch_size > 0 && eval.patch_stride > 0, "eval: patch size and stride must be positive");
}

AppConfig config_from_json(const Json& j) {
  AppConfig c;
  std::vector<std::string> unknown;
  {
    Section root(j, "", unknown);
    std::string mode = "dpct";
    root.get("mode", mode);
    c.mode = parse_mode(mode);
    root.get("preset", c.preset);
    c.model = ModelConfig::from_name(c.preset);
    c.rate = c.preset == "paper" ? RateConfig::paper() : RateConfig::toy();
    if (c.mode == Mode::cct) c.loss.beta_scalar = 8.0;
    if (root.has("model")) read_model(root.child("model"), c.model);
    if (root.has("rate")) read_rate(root.child("rate"), c.rate);
    if (root.has("channel")) read_channel(root.child("channel"), c.channel);
    if (root.has("loss")) {
      auto s = root.child("loss");
      s.get("lambda", c.loss.lambda);
      s.get("beta_scalar", c.loss.beta_scalar);
      s.get("c_p", c.loss.c_p);
      s.get("distortion_weight", c.loss.distortion_weight);
      s.get("epsilon", c.loss.epsilon);
    }
    c.loss.eta = c.rate.eta;
    if (root.has("data")) {
      auto s = root.child("data");
      s.get("kind", c.data.kind);
      s.get("directory", c.data.directory);
      s.get("crop_size", c.data.crop_size);
      s.get("resize", c.data.resize);
      s.get("holdout_fraction", c.data.holdout_fraction);
      s.get("synthetic_count", c.data.synthetic_count);
      s.get("holdout_count", c.data.holdout_count);
      s.get("seed", c.data.seed);
    }
    if (root.has("train")) {
      auto s = root.child("train");
      s.get("rd_steps", c.train.rd_steps);
      s.get("rdp_steps", c.train.rdp_steps);
      s.get("batch_size", c.train.batch_size);
      s.get("learning_rate", c.train.learning_rate);
      s.get("constant_map_fraction", c.train.constant_map_fraction);
      s.get("decay_start_fraction", c.train.decay_start_fraction);
      s.get("decay_factor", c.train.decay_factor);
      s.get("mask_fraction", c.train.mask_fraction);
      s.get("seed", c.train.seed);
      s.get("out_dir", c.train.out_dir);
      s.get("checkpoint_every", c.train.checkpoint_every);
      s.get("log_every", c.train.log_every);
      s.get("probe_images", c.train.probe_images);
    }
    if (root.has("eval")) {
      auto s = root.child("eval");
      s.get("checkpoints", c.eval.checkpoints);
      s.get("betas", c.eval.betas);
      s.get("prompt_sets", c.eval.prompt_sets);
      if (s.has("snrs_db")) {
        Json v;
        s.get("snrs_db", v);
        RDP_REQUIRE(v.is_array(), "config: eval.snrs_db must be a list");
        c.eval.snrs_db.clear();
        for (const auto& e : v) c.eval.snrs_db.push_back(snr_from_json(e, "eval.snrs_db"));
      }
      s.get("images", c.eval.images);
      s.get("patch_size", c.eval.patch_size);
      s.get("patch_stride", c.eval.patch_stride);
      s.get("output", c.eval.output);
    }
    if (root.has("serve")) {
      auto s = root.child("serve");
      s.get("host", c.serve.host);
      s.get("port", c.serve.port);
      s.get("dpct_checkpoint", c.serve.dpct_checkpoint);
      s.get("cct_checkpoint", c.serve.cct_checkpoint);
    }
    if (root.has("transmit")) {
      auto s = root.child("transmit");
      s.get("checkpoint", c.transmit.checkpoint);
      s.get("image", c.transmit.image);
      s.get("label_map", c.transmit.label_map);
      s.get("registry", c.transmit.registry);
      s.get("realism_map", c.transmit.realism_map);
      s.get("prompts", c.transmit.prompts);
      s.get("output_dir", c.transmit.output_dir);
      s.get("stream_id", c.transmit.stream_id);
    }
  }
  if (!unknown.empty()) throw RejectedInput("config: unknown keys: " + join(unknown));
  c.validate();
  return c;
}

Json to_json(const ModelConfig& m) {
  return Json{{"preset", m.preset},
              {"channels", m.channels},
              {"bottleneck", m.bottleneck},
              {"downsample_factor", m.downsample_factor},
              {"cond_rb_count", m.cond_rb_count},
              {"stage_widths", m.stage_widths},
              {"jscc_blocks", m.jscc_blocks},
              {"jscc_heads", m.jscc_heads},
              {"jscc_mlp_ratio", m.jscc_mlp_ratio},
              {"hyper_channels", m.hyper_channels},
              {"label_channels", m.label_channels},
              {"disc_width", m.disc_width},
              {"attention", m.attention},
              {"p_max", m.p_max},
              {"beta_max", m.beta_max}};
}

ModelConfig model_from_json(const Json& j) {
  ModelConfig m;
  std::vector<std::string> unknown;
  std::string preset = j.value("preset", std::string("toy"));
  m = ModelConfig::from_name(preset);
  read_model(Section(j, "model", unknown), m);
  if (!unknown.empty()) throw RejectedInput("model config: unknown keys: " + join(unknown));
  m.validate();
  return m;
}

Json to_json(const RateConfig& r) {
  return Json{{"eta", r.eta},
              {"grid", r.grid},
              {"side_info_bits_per_embedding", r.side_info_bits_per_embedding},
              {"bits_per_channel_symbol", r.bits_per_channel_symbol}};
}

RateConfig rate_from_json(const Json& j) {
  RateConfig r = RateConfig::toy();
  std::vector<std::string> unknown;
  read_rate(Section(j, "rate", unknown), r);
  if (!unknown.empty()) throw RejectedInput("rate config: unknown keys: " + join(unknown));
  r.validate();
  return r;
}

Json to_json(const channel::ChannelConfig& c) {
  return Json{{"kind", channel::to_string(c.kind)},
              {"snr_db", snr_to_json(c.snr_db)},
              {"seed", c.seed},
              {"equalization", channel::to_string(c.equalization)}};
}

channel::ChannelConfig channel_from_json(const Json& j) {
  channel::ChannelConfig c;
  std::vector<std::string> unknown;
  read_channel(Section(j, "channel", unknown), c);
  if (!unknown.empty()) throw RejectedInput("channel config: unknown keys: " + join(unknown));
  c.validate();
  return c;
}

Json to_json(const BandwidthReport& r) {
  Json regions = Json::object();
  for (const auto& [k, v] : r.per_region) regions[k] = v;
  return Json{{"symbol_count", r.symbol_count},
              {"side_info_symbols", r.side_info_symbols},
              {"label_map_symbols", r.label_map_symbols},
              {"cbr", r.cbr},
              {"source_dimension", r.source_dimension},
              {"per_region", regions}};
}

Json config_to_json(const AppConfig& c) {
  Json snrs = Json::array();
  for (double v : c.eval.snrs_db) snrs.push_back(snr_to_json(v));
  return Json{
      {"mode", to_string(c.mode)},
      {"preset", c.preset},
      {"model", to_json(c.model)},
      {"rate", to_json(c.rate)},
      {"channel", to_json(c.channel)},
      {"loss",
       {{"lambda", c.loss.lambda},
        {"beta_scalar", c.loss.beta_scalar},
        {"c_p", c.loss.c_p},
        {"distortion_weight", c.loss.distortion_weight},
        {"epsilon", c.loss.epsilon}}},
      {"data",
       {{"kind", c.data.kind},
        {"directory", c.data.directory},
        {"crop_size", c.data.crop_size},
        {"resize", c.data.resize},
        {"holdout_fraction", c.data.holdout_fraction},
        {"synthetic_count", c.data.synthetic_count},
        {"holdout_count", c.data.holdout_count},
        {"seed", c.data.seed}}},
      {"train",
       {{"rd_steps", c.train.rd_steps},
        {"rdp_steps", c.train.rdp_steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"constant_map_fraction", c.train.constant_map_fraction},
        {"decay_start_fraction", c.train.decay_start_fraction},
        {"decay_factor", c.train.decay_factor},
        {"mask_fraction", c.train.mask_fraction},
        {"seed", c.train.seed},
        {"out_dir", c.train.out_dir},
        {"checkpoint_every", c.train.checkpoint_every},
        {"log_every", c.train.log_every},
        {"probe_images", c.train.probe_images}}},
      {"eval",
       {{"checkpoints", c.eval.checkpoints},
        {"betas", c.eval.betas},
        {"prompt_sets", c.eval.prompt_sets},
        {"snrs_db", snrs},
        {"images", c.eval.images},
        {"patch_size", c.eval.patch_size},
        {"patch_stride", c.eval.patch_stride},
        {"output", c.eval.output}}},
      {"serve",
       {{"host", c.serve.host},
        {"port", c.serve.port},
        {"dpct_checkpoint", c.serve.dpct_checkpoint},
        {"cct_checkpoint", c.serve.cct_checkpoint}}},
      {"transmit",
       {{"checkpoint", c.transmit.checkpoint},
        {"image", c.transmit.image},
        {"label_map", c.transmit.label_map},
        {"registry", c.transmit.registry},
        {"realism_map", c.transmit.realism_map},
        {"prompts", c.transmit.prompts},
        {"output_dir", c.transmit.output_dir},
        {"stream_id", c.transmit.stream_id}}},
  };
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RejectedInput("config: cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw RejectedInput("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_overrides(Json& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    RDP_REQUIRE(eq != std::string::npos && eq > 0, "override '" + o + "' must look like key=value");
    const auto key = o.substr(0, eq), raw = o.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::parse_error&) {
      value = raw;
    }
    Json* node = &doc;
    std::stringstream path(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i])) (*node)[parts[i]] = Json::object();
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
  }
}

}  // namespace rdp
