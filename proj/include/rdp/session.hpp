#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "rdp/channel.hpp"
#include "rdp/config.hpp"
#include "rdp/label_map.hpp"
#include "rdp/models.hpp"
#include "rdp/stream.hpp"

namespace rdp {

/// Per-label sub-streams of one full stream. Every sub-stream keeps the full allocation; its
/// mask selects the positions that label owns.
using StreamSet = std::map<std::string, ChannelSymbolStream>;

/// `owners[i]` names the stream that receives position i's segment. Labels in `labels` that
/// own nothing still get an (empty) entry.
StreamSet split_streams(const ChannelSymbolStream& full, std::span<const std::string> owners,
                        std::span<const std::string> labels = {});
/// Owners by block majority over the label map.
StreamSet split_streams(const ChannelSymbolStream& full, const InstanceLabelMap& map, int downsample_factor);

/// Union of disjoint sub-streams of one allocation, symbols back in raster order. An empty
/// selection yields the all-masked stream.
ChannelSymbolStream merge_streams(std::span<const ChannelSymbolStream* const> parts, const RateAllocation& alloc);

/// Full-stream slot index of every symbol of `part`, given the full stream's layout.
std::vector<std::size_t> stream_slots(const ChannelSymbolStream& part);

/// Sender cache plus client-side view of one interactive transmission.
struct SessionState {
  std::string id;
  Mode mode = Mode::cct;
  int width = 0, height = 0;
  int64_t latent_h = 0, latent_w = 0;
  std::optional<InstanceLabelMap> label_map;
  RateAllocation alloc;
  std::vector<std::string> owners;
  StreamSet cache;
  double scale = 1.0;
  channel::ChannelRealization realization;
  std::vector<std::string> history;
  StreamSet received;
  std::uint64_t revision = 0;

  std::vector<std::string> labels() const;
  /// Received streams (all when `subset` is empty) merged into one decodable stream.
  ChannelSymbolStream client_stream(const std::vector<std::string>& subset = {}) const;
};

/// Builds the cache from a full unmasked stream and draws the channel realization that all
/// prompts of this session share.
SessionState make_session(std::string id, Mode mode, int width, int height, int64_t latent_h, int64_t latent_w,
                          ChannelSymbolStream full, std::vector<std::string> owners,
                          std::optional<InstanceLabelMap> label_map, const channel::ChannelConfig& channel,
                          std::uint64_t stream_id);

struct PromptOutcome {
  bool delivered = false;
  std::string notice;
  ChannelSymbolStream stream;  // received symbols for this prompt
  long long symbols = 0;
};

/// Sends the cached stream for `label` over the channel. Duplicates are a no-op with a
/// notice; unknown labels are rejected.
PromptOutcome session_prompt(SessionState& state, const std::string& label, const channel::Channel& channel);

BandwidthReport session_report(const SessionState& state, const RateConfig& rate);

/// Latent from whatever has been received, zero-padded with r_0 elsewhere, then the
/// label-conditioned generator.
torch::Tensor reconstruct_scalable(CctModel& model, const InstanceLabelMap& map, const ChannelSymbolStream& received);

// -- wire protocol ------------------------------------------------------------------------

enum class MessageType : std::uint8_t {
  create_session = 1,
  label_map = 2,
  prompt = 3,
  stream = 4,
  decode_request = 5,
  image = 6,
  report = 7,
  error = 8,
};
std::string to_string(MessageType t);

/// Envelope (little-endian):
///
///   u32  length of everything that follows
///   u8   type
///   u32  session id length, then the id bytes
///   u64  revision
///   ...  payload
struct Message {
  MessageType type = MessageType::error;
  std::string session_id;
  std::uint64_t revision = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Message&) const = default;
};

std::vector<std::uint8_t> encode_message(const Message& m);
Message decode_message(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);
/// Splits a concatenation of messages (a transcript).
std::vector<Message> decode_messages(std::span<const std::uint8_t> bytes);

/// Payloads that mix a JSON header with a binary blob: u32-prefixed JSON text, then
/// u32-prefixed bytes. An empty payload unpacks to {} with no blob.
std::vector<std::uint8_t> pack_json_blob(const Json& header, std::span<const std::uint8_t> blob = {});
std::pair<Json, std::vector<std::uint8_t>> unpack_json_blob(std::span<const std::uint8_t> payload);

}  // namespace rdp
