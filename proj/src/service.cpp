#include "rdp/service.hpp"

#include <sstream>

#include <httplib.h>
#include <c10/util/Logging.h>

#include "rdp/dataset.hpp"
#include "rdp/error.hpp"
#include "rdp/image_io.hpp"
#include "rdp/jscc.hpp"
#include "rdp/pipeline.hpp"

namespace rdp {

namespace {

Message reply(MessageType type, const SessionState& s, std::vector<std::uint8_t> payload) {
  return Message{type, s.id, s.revision, std::move(payload)};
}

std::vector<std::uint8_t> json_payload(const Json& j) { return pack_json_blob(j); }

channel::ChannelConfig channel_override(channel::ChannelConfig base, const Json& h) {
  if (h.contains("snr_db")) {
    const auto& v = h["snr_db"];
    if (v.is_null() || (v.is_string() && (v == "inf" || v == "noiseless"))) {
      base.snr_db = channel::ChannelConfig::noiseless;
    } else {
      RDP_REQUIRE(v.is_number(), "create: snr_db must be a number, \"inf\" or null");
      base.snr_db = v.get<double>();
    }
  }
  if (h.contains("seed")) base.seed = h["seed"].get<std::uint64_t>();
  if (h.contains("kind")) base.kind = channel::parse_kind(h["kind"].get<std::string>());
  base.validate();
  return base;
}

}  // namespace

SessionService::SessionService(AppConfig cfg, std::optional<DpctModel> dpct, std::optional<CctModel> cct)
    : cfg_(std::move(cfg)), dpct_(std::move(dpct)), cct_(std::move(cct)) {
  RDP_REQUIRE(dpct_ || cct_, "service: at least one model is required");
  if (dpct_) (*dpct_)->eval();
  if (cct_) (*cct_)->eval();
}

const RateConfig& SessionService::rate(Mode m) const {
  return m == Mode::dpct ? (*dpct_)->rate_cfg : (*cct_)->rate_cfg;
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  return it->second;
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

long long SessionService::channel_uses(const std::string& session_id) const {
  auto e = find(session_id);
  std::lock_guard lock(e->mu);
  return e->channel->uses();
}

Message SessionService::handle(const Message& request) {
  if (request.type == MessageType::create_session) return create(request);
  auto e = find(request.session_id);
  std::lock_guard lock(e->mu);
  ++e->state.revision;
  switch (request.type) {
    case MessageType::label_map: return label_map(*e);
    case MessageType::prompt: return prompt(*e, request);
    case MessageType::decode_request: return decode(*e, request);
    case MessageType::report: return report(*e);
    default: throw RejectedInput("service: " + to_string(request.type) + " is not a request message");
  }
}

Message SessionService::handle_safe(const Message& request) noexcept {
  int status = 500;
  std::string what;
  try {
    return handle(request);
  } catch (const NotFound& e) {
    status = 404;
    what = e.what();
  } catch (const RejectedInput& e) {
    status = 400;
    what = e.what();
  } catch (const std::exception& e) {
    what = e.what();
  }
  try {
    return Message{MessageType::error, request.session_id, 0, json_payload({{"status", status}, {"error", what}})};
  } catch (...) {
    return Message{MessageType::error, {}, 0, {}};
  }
}

Message SessionService::create(const Message& request) {
  auto [h, blob] = unpack_json_blob(request.payload);
  Mode mode = cct_ ? Mode::cct : Mode::dpct;
  if (h.contains("mode")) mode = parse_mode(h["mode"].get<std::string>());
  if (mode == Mode::dpct && !dpct_) throw RejectedInput("create: no distortion-perception model is loaded");
  if (mode == Mode::cct && !cct_) throw RejectedInput("create: no content-controlled model is loaded");
  const auto ch_cfg = channel_override(cfg_.channel, h);
  const std::uint64_t stream_id = h.value("stream_id", std::uint64_t{0});

  torch::Tensor x;
  std::optional<InstanceLabelMap> labels;
  if (h.contains("synthetic_index")) {
    auto data = make_dataset(cfg_.data, true);
    const auto i = h["synthetic_index"].get<std::size_t>();
    RDP_REQUIRE(i < data->size(), "create: synthetic_index out of range (" + std::to_string(data->size()) + " images)");
    auto s = data->get(i);
    x = s.image.unsqueeze(0);
    labels = s.labels;
  } else {
    const std::size_t image_size = h.value("image_size", blob.size());
    RDP_REQUIRE(image_size > 0 && image_size <= blob.size(), "create: image_size must cover a PNG image in the blob");
    x = rgb_to_tensor(decode_png(std::span(blob).first(image_size))).unsqueeze(0);
    if (image_size < blob.size()) labels = decode_label_map_rle(std::span(blob).subspan(image_size));
  }
  const int height = static_cast<int>(x.size(2)), width = static_cast<int>(x.size(3));

  auto entry = std::make_shared<Entry>();
  entry->channel = std::make_unique<channel::Channel>(ch_cfg);
  Encoded enc;
  std::vector<std::string> owners;
  if (mode == Mode::cct) {
    RDP_REQUIRE(labels.has_value(), "create: content-controlled sessions need an instance label map");
    RDP_REQUIRE(labels->width == width && labels->height == height, "create: label map and image sizes differ");
    auto& m = *cct_;
    enc = transmitter(m->analysis, m->entropy, m->jscc, m->model_cfg, m->rate_cfg, x);
    owners = block_owners(*labels, m->model_cfg.downsample_factor);
  } else {
    auto& m = *dpct_;
    enc = transmitter(m->analysis, m->entropy, m->jscc, m->model_cfg, m->rate_cfg, x);
    owners.assign(enc.alloc.size(), "image");
    labels.reset();
  }

  std::unique_lock lock(mu_);
  const std::string id = "s" + std::to_string(next_id_++);
  entry->state = make_session(id, mode, width, height, enc.latent_h, enc.latent_w, std::move(enc.stream),
                              std::move(owners), std::move(labels), ch_cfg, stream_id);
  entry->state.revision = 1;
  sessions_.emplace(id, entry);
  LOG(INFO) << "session " << id << " created (" << to_string(mode) << ", " << width << "x" << height << ")";
  return reply(MessageType::report, entry->state, json_payload(summary(entry->state, *entry->channel)));
}

Message SessionService::label_map(Entry& e) {
  const auto& s = e.state;
  std::vector<std::uint8_t> rle;
  if (s.label_map) rle = encode_label_map_rle(*s.label_map);
  return reply(MessageType::label_map, s, std::move(rle));
}

Message SessionService::prompt(Entry& e, const Message& request) {
  auto [h, blob] = unpack_json_blob(request.payload);
  RDP_REQUIRE(h.contains("label") && h["label"].is_string(), "prompt: a \"label\" string is required");
  const auto label = h["label"].get<std::string>();
  auto out = session_prompt(e.state, label, *e.channel);
  Json j{{"label", label},
         {"delivered", out.delivered},
         {"notice", out.notice},
         {"symbols", out.symbols},
         {"report", to_json(session_report(e.state, rate(e.state.mode)))}};
  return reply(MessageType::stream, e.state, pack_json_blob(j, serialize_stream(out.stream, rate(e.state.mode))));
}

Message SessionService::decode(Entry& e, const Message& request) {
  auto [h, blob] = unpack_json_blob(request.payload);
  const auto& s = e.state;
  std::vector<std::string> subset;
  if (h.contains("labels")) subset = h["labels"].get<std::vector<std::string>>();
  const auto received = s.client_stream(subset);
  torch::Tensor img;
  if (s.mode == Mode::cct) {
    RDP_REQUIRE(blob.empty() && !h.contains("beta"), "decode: realism maps apply to distortion-perception sessions only");
    img = reconstruct_scalable(*cct_, *s.label_map, received);
  } else {
    auto& m = *dpct_;
    RealismMap beta;
    if (!blob.empty()) {
      std::istringstream is(std::string(blob.begin(), blob.end()));
      beta = read_realism_map(is);
    } else {
      const double b = h.value("beta", 0.0);
      RDP_REQUIRE(b >= 0.0 && b <= m->model_cfg.beta_max,
                  "decode: beta must lie in [0, " + std::to_string(m->model_cfg.beta_max) + "]");
      beta = RealismMap::constant(s.latent_h, s.latent_w, b, m->model_cfg.beta_max);
    }
    RDP_REQUIRE(beta.beta_max == m->model_cfg.beta_max, "decode: realism map beta_max differs from the model's");
    auto y_hat = jscc_decode(m->jscc, received, m->rate_cfg, s.latent_h, s.latent_w);
    img = decode_dpct(m, y_hat, beta);
  }
  Json j{{"width", s.width}, {"height", s.height}, {"received", received.mask.count()}};
  return reply(MessageType::image, s, pack_json_blob(j, encode_png(tensor_to_rgb(img[0]))));
}

Message SessionService::report(Entry& e) {
  return reply(MessageType::report, e.state, json_payload(summary(e.state, *e.channel)));
}

Json SessionService::summary(const SessionState& s, const channel::Channel& ch) const {
  Json received = Json::array();
  for (const auto& [label, st] : s.received) received.push_back(label);
  Json streams = Json::object();
  for (const auto& [label, st] : s.cache) streams[label] = st.symbols.size();
  return Json{{"session_id", s.id},
              {"revision", s.revision},
              {"mode", to_string(s.mode)},
              {"width", s.width},
              {"height", s.height},
              {"latent", {s.latent_h, s.latent_w}},
              {"labels", s.labels()},
              {"stream_symbols", streams},
              {"received", received},
              {"history", s.history},
              {"channel_uses", ch.uses()},
              {"report", to_json(session_report(s, rate(s.mode)))}};
}

// -- HTTP ---------------------------------------------------------------------------------

namespace {

std::string as_body(const Message& m) {
  auto b = encode_message(m);
  return std::string(b.begin(), b.end());
}

int status_of(const Message& m) {
  if (m.type != MessageType::error) return 200;
  try {
    return unpack_json_blob(m.payload).first.value("status", 500);
  } catch (...) {
    return 500;
  }
}

void send(httplib::Response& res, const Message& m) {
  res.status = status_of(m);
  res.set_header("X-Session-Id", m.session_id);
  res.set_header("X-Revision", std::to_string(m.revision));
  res.set_content(as_body(m), "application/octet-stream");
}

Message parse_body(const httplib::Request& req, MessageType expected, const std::string& id) {
  if (req.body.empty()) return Message{expected, id, 0, {}};
  auto m = decode_message(std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
  RDP_REQUIRE(m.type == expected, "expected a " + to_string(expected) + " message, got " + to_string(m.type));
  m.session_id = id;
  return m;
}

Message request_error(const std::string& id, const std::exception& e) {
  return Message{MessageType::error, id, 0, pack_json_blob({{"status", 400}, {"error", e.what()}})};
}

}  // namespace

void install_routes(httplib::Server& server, SessionService& service) {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"status\":\"ok\"}", "application/json");
  });

  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    try {
      auto m = parse_body(req, MessageType::create_session, "");
      send(res, service.handle_safe(m));
    } catch (const std::exception& e) {
      send(res, request_error("", e));
    }
  });

  auto simple = [&service](MessageType type) {
    return [&service, type](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      Message m;
      try {
        m = parse_body(req, type, id);
      } catch (const std::exception& e) {
        send(res, request_error(id, e));
        return;
      }
      auto out = service.handle_safe(m);
      const auto format = req.get_param_value("format");
      if (out.type == MessageType::image && format == "png") {
        auto blob = unpack_json_blob(out.payload).second;
        res.set_header("X-Session-Id", out.session_id);
        res.set_header("X-Revision", std::to_string(out.revision));
        res.set_content(std::string(blob.begin(), blob.end()), "image/png");
      } else if (out.type == MessageType::report && format == "json") {
        res.set_header("X-Session-Id", out.session_id);
        res.set_header("X-Revision", std::to_string(out.revision));
        res.set_content(unpack_json_blob(out.payload).first.dump(), "application/json");
      } else {
        send(res, out);
      }
    };
  };
  server.Get(R"(/sessions/([^/]+)/labelmap)", simple(MessageType::label_map));
  server.Post(R"(/sessions/([^/]+)/prompt)", simple(MessageType::prompt));
  server.Post(R"(/sessions/([^/]+)/decode)", simple(MessageType::decode_request));
  server.Get(R"(/sessions/([^/]+)/report)", simple(MessageType::report));

  server.Post(R"(/sessions/([^/]+)/progressive)", [&service](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    std::vector<std::string> labels;
    Json decode_opts = Json::object();
    try {
      auto j = Json::parse(req.body);
      labels = j.at("labels").get<std::vector<std::string>>();
      if (j.contains("beta")) decode_opts["beta"] = j["beta"];
    } catch (const std::exception& e) {
      send(res, request_error(id, e));
      return;
    }
    res.set_header("X-Session-Id", id);
    res.set_chunked_content_provider(
        "application/octet-stream", [&service, id, labels, decode_opts](std::size_t, httplib::DataSink& sink) {
          for (const auto& label : labels) {
            auto s = service.handle_safe(Message{MessageType::prompt, id, 0, pack_json_blob({{"label", label}})});
            auto body = as_body(s);
            if (!sink.write(body.data(), body.size())) return false;
            if (s.type == MessageType::error) break;
            auto img = service.handle_safe(Message{MessageType::decode_request, id, 0, pack_json_blob(decode_opts)});
            body = as_body(img);
            if (!sink.write(body.data(), body.size())) return false;
          }
          sink.done();
          return true;
        });
  });
}

}  // namespace rdp
