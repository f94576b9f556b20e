#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rdp/config.hpp"
#include "rdp/models.hpp"
#include "rdp/session.hpp"

namespace httplib {
class Server;
}

namespace rdp {

/// Interactive transmission sessions over loaded models.
///
/// Every request is a wire Message and every reply is one too, so a transcript of requests
/// replayed against a fresh service reproduces the replies byte for byte. Session ids are
/// assigned in creation order ("s1", "s2", ...). Each reply carries the session's revision,
/// which increases by one per handled request.
///
/// Request payloads (see pack_json_blob):
///   CreateSession  {"mode", "snr_db", "seed", "kind", "stream_id", "synthetic_index",
///                   "image_size"} + image PNG bytes followed by label-map RLE bytes
///   LabelMap       empty                      -> LabelMap with the RLE label map
///   Prompt         {"label"}                  -> Stream: {delivered, notice, symbols, report} + stream bytes
///   DecodeRequest  {"labels", "beta"} + optional realism-map text -> Image: {width, height} + PNG
///   Report         empty                      -> Report: session summary JSON
class SessionService {
public:
  SessionService(AppConfig cfg, std::optional<DpctModel> dpct, std::optional<CctModel> cct);

  /// Throws RejectedInput / NotFound on bad requests.
  Message handle(const Message& request);
  /// As handle(), but failures become Error messages carrying {"status", "error"}.
  Message handle_safe(const Message& request) noexcept;

  long long channel_uses(const std::string& session_id) const;
  std::size_t session_count() const;
  const AppConfig& config() const { return cfg_; }

private:
  struct Entry {
    mutable std::mutex mu;
    SessionState state;
    std::unique_ptr<channel::Channel> channel;
  };

  Message create(const Message& request);
  Message label_map(Entry& e);
  Message prompt(Entry& e, const Message& request);
  Message decode(Entry& e, const Message& request);
  Message report(Entry& e);
  Json summary(const SessionState& s, const channel::Channel& ch) const;
  const RateConfig& rate(Mode m) const;
  std::shared_ptr<Entry> find(const std::string& id) const;

  AppConfig cfg_;
  std::optional<DpctModel> dpct_;
  std::optional<CctModel> cct_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t next_id_ = 1;
};

/// HTTP routes (bodies are wire messages, application/octet-stream):
///
///   POST /sessions                      CreateSession -> Report
///   GET  /sessions/{id}/labelmap        -> LabelMap
///   POST /sessions/{id}/prompt          Prompt -> Stream
///   POST /sessions/{id}/decode          DecodeRequest -> Image   (?format=png: bare PNG)
///   GET  /sessions/{id}/report          -> Report                (?format=json: bare JSON)
///   POST /sessions/{id}/progressive     JSON {"labels": [...], "beta": b}; chunked Stream, Image
///                                       message pairs, one per label
///   GET  /health
///
/// Unknown sessions answer 404, rejected input 400, both with an Error message body.
void install_routes(httplib::Server& server, SessionService& service);

}  // namespace rdp
