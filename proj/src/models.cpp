#include "rdp/models.hpp"

#include "rdp/error.hpp"

namespace rdp {

namespace {

void append(std::vector<torch::Tensor>& out, const std::vector<torch::Tensor>& more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

DpctModelImpl::DpctModelImpl(const ModelConfig& model, const RateConfig& rate) : model_cfg(model), rate_cfg(rate) {
  model.validate();
  rate.validate();
  analysis = register_module("analysis", AnalysisTransform(model));
  entropy = register_module("entropy", HyperpriorEntropyModel(model));
  jscc = register_module("jscc", VrJscc(model, rate));
  srem = register_module("srem", Srem(SremConfig{model.p_max, model.channels}));
  generator = register_module("generator", ConditionalGenerator(model, true));
  discriminator = register_module("discriminator", PatchDiscriminator(model, DiscriminatorCondition::latent));
}

std::vector<torch::Tensor> DpctModelImpl::generator_side_parameters() const {
  std::vector<torch::Tensor> out;
  for (const torch::nn::Module* m : {static_cast<const torch::nn::Module*>(analysis.get()),
                                     static_cast<const torch::nn::Module*>(entropy.get()),
                                     static_cast<const torch::nn::Module*>(jscc.get()),
                                     static_cast<const torch::nn::Module*>(srem.get()),
                                     static_cast<const torch::nn::Module*>(generator.get())})
    append(out, m->parameters());
  return out;
}

CctModelImpl::CctModelImpl(const ModelConfig& model, const RateConfig& rate) : model_cfg(model), rate_cfg(rate) {
  model.validate();
  rate.validate();
  analysis = register_module("analysis", AnalysisTransform(model));
  entropy = register_module("entropy", HyperpriorEntropyModel(model));
  jscc = register_module("jscc", VrJscc(model, rate));
  label_encoder = register_module("label_encoder", LabelMapEncoder(model));
  generator = register_module("generator", LabelConditionedGenerator(model));
  discriminator = register_module("discriminator", PatchDiscriminator(model, DiscriminatorCondition::label_map));
}

std::vector<torch::Tensor> CctModelImpl::generator_side_parameters() const {
  std::vector<torch::Tensor> out;
  for (const torch::nn::Module* m : {static_cast<const torch::nn::Module*>(analysis.get()),
                                     static_cast<const torch::nn::Module*>(entropy.get()),
                                     static_cast<const torch::nn::Module*>(jscc.get()),
                                     static_cast<const torch::nn::Module*>(label_encoder.get()),
                                     static_cast<const torch::nn::Module*>(generator.get())})
    append(out, m->parameters());
  return out;
}

// ---------------------------------------------------------------------------------------------

Json CheckpointMeta::to_json() const {
  return Json{{"mode", rdp::to_string(mode)},
              {"preset", model.preset},
              {"c", model.channels},
              {"N", model.bottleneck},
              {"df", model.downsample_factor},
              {"model", rdp::to_json(model)},
              {"rate", rdp::to_json(rate)},
              {"phase", phase},
              {"step", step}};
}

CheckpointMeta CheckpointMeta::from_json(const Json& j) {
  CheckpointMeta m;
  m.mode = parse_mode(j.at("mode").get<std::string>());
  m.model = model_from_json(j.at("model"));
  m.rate = rate_from_json(j.at("rate"));
  m.phase = j.at("phase").get<std::string>();
  m.step = j.at("step").get<long long>();
  return m;
}

void save_checkpoint(const std::filesystem::path& path, torch::nn::Module& model, const CheckpointMeta& meta) {
  torch::serialize::OutputArchive archive;
  torch::NoGradGuard no_grad;
  for (const auto& p : model.named_parameters()) archive.write("param/" + p.key(), p.value().detach());
  for (const auto& b : model.named_buffers()) archive.write("buffer/" + b.key(), b.value());
  archive.write("metadata", c10::IValue(meta.to_json().dump()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  archive.save_to(path.string());
}

namespace {

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFound("checkpoint " + path.string() + " does not exist");
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  return archive;
}

CheckpointMeta meta_of(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  c10::IValue v;
  if (!archive.try_read("metadata", v) || !v.isString())
    throw RejectedInput("checkpoint " + path.string() + " has no metadata record");
  return CheckpointMeta::from_json(Json::parse(v.toStringRef()));
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  auto archive = open_archive(path);
  return meta_of(archive, path);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, torch::nn::Module& model) {
  auto archive = open_archive(path);
  auto meta = meta_of(archive, path);
  torch::NoGradGuard no_grad;
  auto restore = [&](const std::string& key, torch::Tensor& dst) {
    torch::Tensor src;
    if (!archive.try_read(key, src)) throw RejectedInput("checkpoint is missing tensor '" + key + "'");
    if (src.sizes() != dst.sizes())
      throw RejectedInput("checkpoint tensor '" + key + "' has shape " + c10::str(src.sizes()) +
                          ", model expects " + c10::str(dst.sizes()));
    dst.copy_(src);
  };
  for (auto& p : model.named_parameters()) restore("param/" + p.key(), p.value());
  for (auto& b : model.named_buffers()) restore("buffer/" + b.key(), b.value());
  return meta;
}

void require_compatible(const CheckpointMeta& meta, Mode mode, const std::string& preset) {
  if (meta.mode != mode)
    throw RejectedInput("checkpoint holds a " + to_string(meta.mode) + " model, expected " + to_string(mode));
  if (!preset.empty() && meta.model.preset != preset)
    throw RejectedInput("checkpoint preset '" + meta.model.preset + "' does not match configured preset '" + preset + "'");
}

DpctModel load_dpct(const std::filesystem::path& path, CheckpointMeta* meta) {
  auto m = read_checkpoint_meta(path);
  require_compatible(m, Mode::dpct, "");
  DpctModel model(m.model, m.rate);
  load_checkpoint(path, *model);
  model->eval();
  if (meta) *meta = m;
  return model;
}

CctModel load_cct(const std::filesystem::path& path, CheckpointMeta* meta) {
  auto m = read_checkpoint_meta(path);
  require_compatible(m, Mode::cct, "");
  CctModel model(m.model, m.rate);
  load_checkpoint(path, *model);
  model->eval();
  if (meta) *meta = m;
  return model;
}

}  // namespace rdp
