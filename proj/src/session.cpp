#include "rdp/session.hpp"

#include <algorithm>

#include "rdp/bits.hpp"
#include "rdp/error.hpp"
#include "rdp/jscc.hpp"
#include "rdp/pipeline.hpp"

namespace rdp {

StreamSet split_streams(const ChannelSymbolStream& full, std::span<const std::string> owners,
                        std::span<const std::string> labels) {
  full.validate();
  RDP_REQUIRE(owners.size() == full.positions(), "split_streams: one owner per latent position required");
  const auto l = full.positions();
  StreamSet out;
  auto entry = [&](const std::string& label) -> ChannelSymbolStream& {
    auto it = out.find(label);
    if (it == out.end()) it = out.emplace(label, ChannelSymbolStream{full.alloc, MaskVector::all(l, false), {}}).first;
    return it->second;
  };
  for (const auto& label : labels) entry(label);
  for (const auto& seg : full.layout()) {
    auto& s = entry(owners[seg.position]);
    s.mask.m[seg.position] = 1;
    auto src = full.segment(seg);
    s.symbols.insert(s.symbols.end(), src.begin(), src.end());
  }
  return out;
}

StreamSet split_streams(const ChannelSymbolStream& full, const InstanceLabelMap& map, int downsample_factor) {
  const auto owners = block_owners(map, downsample_factor);
  const auto labels = map.labels();
  return split_streams(full, owners, labels);
}

ChannelSymbolStream merge_streams(std::span<const ChannelSymbolStream* const> parts, const RateAllocation& alloc) {
  const auto l = alloc.size();
  ChannelSymbolStream out{alloc, MaskVector::all(l, false), {}};
  // Which part, and where inside it, each position's segment lives.
  std::vector<std::pair<const ChannelSymbolStream*, SegmentSpan>> where(l, {nullptr, {}});
  for (const auto* p : parts) {
    p->validate();
    RDP_REQUIRE(p->alloc == alloc, "merge_streams: streams were cut from different allocations");
    for (const auto& seg : p->layout()) {
      if (where[seg.position].first) {
        throw RejectedInput("merge_streams: position " + std::to_string(seg.position) + " appears in two streams");
      }
      where[seg.position] = {p, seg};
    }
  }
  for (std::size_t i = 0; i < l; ++i) {
    const auto& [p, seg] = where[i];
    if (!p) continue;
    out.mask.m[i] = 1;
    auto src = p->segment(seg);
    out.symbols.insert(out.symbols.end(), src.begin(), src.end());
  }
  return out;
}

std::vector<std::size_t> stream_slots(const ChannelSymbolStream& part) {
  std::vector<std::size_t> start(part.positions() + 1, 0);
  for (std::size_t i = 0; i < part.positions(); ++i)
    start[i + 1] = start[i] + static_cast<std::size_t>(part.alloc.k[i]);
  std::vector<std::size_t> slots;
  slots.reserve(part.symbols.size());
  for (const auto& seg : part.layout())
    for (std::size_t j = 0; j < seg.length; ++j) slots.push_back(start[seg.position] + j);
  return slots;
}

std::vector<std::string> SessionState::labels() const {
  if (label_map) return label_map->labels();
  std::vector<std::string> out;
  for (const auto& [k, v] : cache) out.push_back(k);
  return out;
}

ChannelSymbolStream SessionState::client_stream(const std::vector<std::string>& subset) const {
  std::vector<const ChannelSymbolStream*> parts;
  if (subset.empty()) {
    for (const auto& [label, s] : received) parts.push_back(&s);
  } else {
    std::set<std::string> seen;
    for (const auto& label : subset) {
      auto it = received.find(label);
      if (it == received.end()) throw RejectedInput("decode: stream '" + label + "' has not been received");
      if (seen.insert(label).second) parts.push_back(&it->second);
    }
  }
  return merge_streams(parts, alloc);
}

SessionState make_session(std::string id, Mode mode, int width, int height, int64_t latent_h, int64_t latent_w,
                          ChannelSymbolStream full, std::vector<std::string> owners,
                          std::optional<InstanceLabelMap> label_map, const channel::ChannelConfig& channel,
                          std::uint64_t stream_id) {
  full.validate();
  RDP_REQUIRE(full.positions() == static_cast<std::size_t>(latent_h * latent_w),
              "session: stream does not cover the latent grid");
  RDP_REQUIRE(full.mask.count() == full.positions(), "session: the cached stream must be unmasked");
  SessionState s;
  s.id = std::move(id);
  s.mode = mode;
  s.width = width;
  s.height = height;
  s.latent_h = latent_h;
  s.latent_w = latent_w;
  s.alloc = full.alloc;
  s.label_map = std::move(label_map);
  std::vector<std::string> labels;
  if (s.label_map) labels = s.label_map->labels();
  s.cache = split_streams(full, owners, labels);
  s.owners = std::move(owners);
  s.scale = channel::power_normalize(full.symbols).scale;
  s.realization = channel::draw_realization((full.symbols.size() + 1) / 2, channel, stream_id);
  return s;
}

PromptOutcome session_prompt(SessionState& state, const std::string& label, const channel::Channel& channel) {
  auto it = state.cache.find(label);
  if (it == state.cache.end()) {
    std::string known;
    for (const auto& l : state.labels()) known += (known.empty() ? "" : ", ") + l;
    throw RejectedInput("prompt: unknown label '" + label + "' (known: " + known + ")");
  }
  PromptOutcome out;
  if (state.received.count(label)) {
    out.notice = "'" + label + "' was already transmitted";
    out.stream = state.received.at(label);
    return out;
  }
  const auto& part = it->second;
  const auto slots = stream_slots(part);
  out.stream = with_symbols(part, channel.transmit_gather(part.symbols, slots, state.scale, state.realization));
  out.symbols = static_cast<long long>(part.symbols.size());
  out.delivered = true;
  state.received.emplace(label, out.stream);
  state.history.push_back(label);
  return out;
}

BandwidthReport session_report(const SessionState& state, const RateConfig& rate) {
  auto merged = state.client_stream();
  const double lm = state.label_map ? label_map_symbols(*state.label_map, rate.bits_per_channel_symbol) : 0.0;
  return compute_cbr(transmitted_allocation(state.alloc, merged.mask), state.width, state.height, rate,
                     state.owners, lm);
}

torch::Tensor reconstruct_scalable(CctModel& model, const InstanceLabelMap& map, const ChannelSymbolStream& received) {
  map.validate();
  received.validate();
  const int df = model->model_cfg.downsample_factor;
  RDP_REQUIRE(map.width % df == 0 && map.height % df == 0, "reconstruct: label map size not divisible by the downsampling factor");
  const int64_t h = map.height / df, w = map.width / df;
  if (received.positions() != static_cast<std::size_t>(h * w)) {
    throw RejectedInput("reconstruct: stream covers " + std::to_string(received.positions()) +
                        " positions but the label map implies " + std::to_string(h * w));
  }
  auto y_hat = jscc_decode(model->jscc, received, model->rate_cfg, h, w);
  return decode_cct(model, y_hat, map);
}

// -- wire protocol ------------------------------------------------------------------------

std::string to_string(MessageType t) {
  switch (t) {
    case MessageType::create_session: return "CreateSession";
    case MessageType::label_map: return "LabelMap";
    case MessageType::prompt: return "Prompt";
    case MessageType::stream: return "Stream";
    case MessageType::decode_request: return "DecodeRequest";
    case MessageType::image: return "Image";
    case MessageType::report: return "Report";
    case MessageType::error: return "Error";
  }
  return "?";
}

std::vector<std::uint8_t> encode_message(const Message& m) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(1 + 4 + m.session_id.size() + 8 + m.payload.size()));
  w.u8(static_cast<std::uint8_t>(m.type));
  w.str(m.session_id);
  w.u64(m.revision);
  w.bytes(m.payload);
  return w.take();
}

Message decode_message(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  ByteReader r(bytes);
  const auto len = r.u32();
  RDP_REQUIRE(len >= 13 && r.remaining() >= len, "message: length prefix exceeds the input");
  ByteReader body(r.bytes(len));
  Message m;
  const auto type = body.u8();
  RDP_REQUIRE(type >= 1 && type <= 8, "message: unknown type " + std::to_string(type));
  m.type = static_cast<MessageType>(type);
  m.session_id = body.str();
  m.revision = body.u64();
  auto rest = body.bytes(body.remaining());
  m.payload.assign(rest.begin(), rest.end());
  if (consumed) *consumed = r.position();
  return m;
}

std::vector<Message> decode_messages(std::span<const std::uint8_t> bytes) {
  std::vector<Message> out;
  while (!bytes.empty()) {
    std::size_t used = 0;
    out.push_back(decode_message(bytes, &used));
    bytes = bytes.subspan(used);
  }
  return out;
}

std::vector<std::uint8_t> pack_json_blob(const Json& header, std::span<const std::uint8_t> blob) {
  ByteWriter w;
  w.str(header.dump());
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);
  return w.take();
}

std::pair<Json, std::vector<std::uint8_t>> unpack_json_blob(std::span<const std::uint8_t> payload) {
  if (payload.empty()) return {Json::object(), {}};
  ByteReader r(payload);
  Json header;
  const auto text = r.str();
  try {
    header = text.empty() ? Json::object() : Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw RejectedInput(std::string("message: malformed JSON header: ") + e.what());
  }
  std::vector<std::uint8_t> blob;
  if (r.remaining() > 0) {
    auto b = r.bytes(r.u32());
    blob.assign(b.begin(), b.end());
  }
  return {std::move(header), std::move(blob)};
}

}  // namespace rdp
