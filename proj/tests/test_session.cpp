#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "rdp/error.hpp"
#include "rdp/pipeline.hpp"
#include "rdp/session.hpp"

using namespace rdp;
using rdp::test::random_image;

namespace {

constexpr int kW = 64, kH = 32;

// Quadrants: road | car, car (second instance) | person, with a person stripe through the road.
InstanceLabelMap scene_map() {
  std::vector<RegistryEntry> reg{
      {{128, 64, 128}, "road"}, {{0, 0, 142}, "car"}, {{0, 0, 139}, "car"}, {{220, 20, 60}, "person"}};
  std::vector<std::uint8_t> rgb(kW * kH * 3);
  for (int y = 0; y < kH; ++y)
    for (int x = 0; x < kW; ++x) {
      int q = (y < kH / 2 ? 0 : 2) + (x < kW / 2 ? 0 : 1);
      if (q == 0 && x >= 4 && x < 10) q = 3;
      for (int k = 0; k < 3; ++k) rgb[(y * kW + x) * 3 + k] = reg[q].rgb[k];
    }
  return InstanceLabelMap::from_rgb(rgb, kW, kH, reg);
}

struct Fixture {
  CctModel model{ModelConfig::tiny(), RateConfig::toy()};
  InstanceLabelMap map = scene_map();
  torch::Tensor x = random_image(1, kH, kW, 42);
  channel::ChannelConfig cfg;
  Encoded enc;

  Fixture() {
    torch::manual_seed(0);
    model = CctModel(ModelConfig::tiny(), RateConfig::toy());
    model->eval();
    cfg.snr_db = 5.0;
    cfg.seed = 77;
    enc = transmitter(model->analysis, model->entropy, model->jscc, model->model_cfg, model->rate_cfg, x);
  }

  SessionState session(std::uint64_t stream_id = 3) const {
    return make_session("s1", Mode::cct, kW, kH, enc.latent_h, enc.latent_w, enc.stream,
                        block_owners(map, model->model_cfg.downsample_factor), map, cfg, stream_id);
  }
};

bool same_stream(const ChannelSymbolStream& a, const ChannelSymbolStream& b) {
  return a.alloc == b.alloc && a.mask == b.mask && a.symbols.size() == b.symbols.size() &&
         std::equal(a.symbols.begin(), a.symbols.end(), b.symbols.begin(),
                    [](float u, float v) { return std::bit_cast<std::uint32_t>(u) == std::bit_cast<std::uint32_t>(v); });
}

}  // namespace

TEST(Split, SingleInstanceMapGivesTheFullStream) {
  Fixture f;
  std::vector<RegistryEntry> reg{{{1, 1, 1}, "sky"}};
  auto single = InstanceLabelMap::from_rgb(std::vector<std::uint8_t>(kW * kH * 3, 1), kW, kH, reg);
  auto parts = split_streams(f.enc.stream, single, 8);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_TRUE(same_stream(parts.at("sky"), f.enc.stream));
}

TEST(Split, PartitionAndBitwiseMerge) {
  Fixture f;
  auto parts = split_streams(f.enc.stream, f.map, 8);
  ASSERT_EQ(parts.size(), 3u);
  std::size_t total = 0;
  std::vector<int> owner_count(f.enc.stream.positions(), 0);
  for (const auto& [label, s] : parts) {
    total += s.symbols.size();
    for (std::size_t i = 0; i < s.positions(); ++i) owner_count[i] += s.mask.m[i];
  }
  EXPECT_EQ(total, f.enc.stream.symbols.size());
  for (int c : owner_count) EXPECT_EQ(c, 1);

  // Any order of the parts reproduces the full stream.
  std::vector<const ChannelSymbolStream*> ptrs;
  for (const auto& [label, s] : parts) ptrs.push_back(&s);
  std::sort(ptrs.begin(), ptrs.end());
  do {
    EXPECT_TRUE(same_stream(merge_streams(ptrs, f.enc.alloc), f.enc.stream));
  } while (std::next_permutation(ptrs.begin(), ptrs.end()));
}

TEST(Split, SlotsPartitionTheFullStream) {
  Fixture f;
  auto parts = split_streams(f.enc.stream, f.map, 8);
  std::vector<std::size_t> all;
  for (const auto& [label, s] : parts) {
    auto slots = stream_slots(s);
    ASSERT_EQ(slots.size(), s.symbols.size());
    for (std::size_t j = 0; j < slots.size(); ++j) EXPECT_EQ(f.enc.stream.symbols[slots[j]], s.symbols[j]);
    all.insert(all.end(), slots.begin(), slots.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(f.enc.stream.symbols.size());
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);
}

TEST(Split, MergeRejectsOverlapAndHandlesEmpty) {
  Fixture f;
  auto parts = split_streams(f.enc.stream, f.map, 8);
  const ChannelSymbolStream* twice[] = {&parts.at("car"), &parts.at("car")};
  EXPECT_THROW(merge_streams(twice, f.enc.alloc), RejectedInput);
  auto empty = merge_streams({}, f.enc.alloc);
  EXPECT_EQ(empty.mask.count(), 0u);
  EXPECT_TRUE(empty.symbols.empty());
}

TEST(Session, MustStartFromUnmaskedStream) {
  Fixture f;
  auto parts = split_streams(f.enc.stream, f.map, 8);
  EXPECT_THROW(make_session("s1", Mode::cct, kW, kH, f.enc.latent_h, f.enc.latent_w, parts.at("car"),
                            block_owners(f.map, 8), f.map, f.cfg, 0),
               RejectedInput);
}

TEST(Session, PromptProtocol) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto s = f.session();
  EXPECT_TRUE(s.history.empty());

  auto first = session_prompt(s, "car", ch);
  EXPECT_TRUE(first.delivered);
  EXPECT_EQ(first.symbols, static_cast<long long>(s.cache.at("car").symbols.size()));
  EXPECT_EQ(s.history, std::vector<std::string>{"car"});
  EXPECT_EQ(ch.uses(), 1);

  const auto before_received = s.received;
  auto dup = session_prompt(s, "car", ch);
  EXPECT_FALSE(dup.delivered);
  EXPECT_EQ(dup.symbols, 0);
  EXPECT_EQ(dup.notice, "'car' was already transmitted");
  EXPECT_EQ(s.history, std::vector<std::string>{"car"});
  EXPECT_EQ(ch.uses(), 1);
  EXPECT_TRUE(same_stream(s.received.at("car"), before_received.at("car")));

  try {
    session_prompt(s, "tree", ch);
    FAIL();
  } catch (const RejectedInput& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'tree'"), std::string::npos);
    EXPECT_NE(msg.find("road, car, person"), std::string::npos);
  }
  EXPECT_EQ(s.history.size(), 1u);

  session_prompt(s, "road", ch);
  session_prompt(s, "person", ch);
  EXPECT_EQ(s.history, (std::vector<std::string>{"car", "road", "person"}));
  // Coverage: the union of received streams is the whole transmission.
  auto merged = s.client_stream();
  EXPECT_EQ(merged.mask.count(), merged.positions());
  EXPECT_EQ(merged.symbols.size(), f.enc.stream.symbols.size());
}

TEST(Session, ClientStreamRejectsUnreceivedLabel) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto s = f.session();
  session_prompt(s, "road", ch);
  EXPECT_NO_THROW(s.client_stream({"road"}));
  EXPECT_THROW(s.client_stream({"road", "car"}), RejectedInput);
}

TEST(Session, AllStreamsEqualTheUnmaskedPipelineBitwise) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto s = f.session(9);
  for (const auto& l : s.labels()) session_prompt(s, l, ch);
  channel::Channel ch2(f.cfg);
  auto full = pipeline_transmit_cct(f.model, f.x, f.map, std::nullopt, ch2, 9);
  auto client = s.client_stream();
  EXPECT_TRUE(same_stream(client, full.received));
  torch::NoGradGuard ng;
  auto x_hat = reconstruct_scalable(f.model, f.map, client);
  EXPECT_TRUE(torch::equal(x_hat, full.reconstruction));
}

TEST(Session, EverySubsetDecodes) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto s = f.session();
  const auto labels = s.labels();
  for (const auto& l : labels) session_prompt(s, l, ch);
  torch::NoGradGuard ng;
  for (unsigned bits = 0; bits < (1u << labels.size()); ++bits) {
    std::vector<const ChannelSymbolStream*> parts;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (bits & (1u << i)) parts.push_back(&s.received.at(labels[i]));
    auto stream = merge_streams(parts, s.alloc);
    // Positions left zero-padded are exactly those outside the received streams.
    for (std::size_t i = 0; i < stream.positions(); ++i) {
      bool owned = false;
      for (const auto* p : parts) owned = owned || p->mask.m[i];
      ASSERT_EQ(stream.mask.m[i] != 0, owned);
    }
    auto x_hat = reconstruct_scalable(f.model, f.map, stream);
    ASSERT_EQ(x_hat.sizes(), (std::vector<int64_t>{1, 3, kH, kW}));
    EXPECT_TRUE(torch::isfinite(x_hat).all().item<bool>());
    EXPECT_GE(x_hat.min().item<float>(), 0.0f);
    EXPECT_LE(x_hat.max().item<float>(), 1.0f);
  }
}

TEST(Session, ReconstructRejectsMismatchedStream) {
  Fixture f;
  auto smaller = rdp::test::three_instance_map(32, 32);
  EXPECT_THROW(reconstruct_scalable(f.model, smaller, f.enc.stream), RejectedInput);
}

TEST(Session, PromptOrderDoesNotMatter) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto a = f.session();
  auto b = f.session();
  for (const auto& l : {"car", "road", "person"}) session_prompt(a, l, ch);
  for (const auto& l : {"person", "car", "road"}) session_prompt(b, l, ch);
  EXPECT_TRUE(same_stream(a.client_stream(), b.client_stream()));
  for (const auto& l : a.labels()) EXPECT_TRUE(same_stream(a.received.at(l), b.received.at(l)));
}

TEST(Accounting, PerLabelCountsSumToFull) {
  Fixture f;
  auto s = f.session();
  long long sum = 0;
  for (const auto& [label, part] : s.cache) sum += static_cast<long long>(part.symbols.size());
  EXPECT_EQ(sum, static_cast<long long>(f.enc.stream.symbols.size()));
  const auto full = compute_cbr(f.enc.alloc, kW, kH, f.model->rate_cfg, s.owners);
  for (const auto& [label, part] : s.cache)
    EXPECT_EQ(full.per_region.count(label) ? full.per_region.at(label) : 0,
              static_cast<long long>(part.symbols.size()));
}

TEST(Accounting, MaskingRemovesExactlyTheMaskedRates) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto full = pipeline_transmit_cct(f.model, f.x, f.map, std::nullopt, ch, 1);
  for (const std::set<std::string>& prompts :
       {std::set<std::string>{}, {"car"}, {"road"}, {"person"}, {"car", "person"}, {"car", "road", "person"}}) {
    auto t = pipeline_transmit_cct(f.model, f.x, f.map, prompts, ch, 1);
    const auto mask = downsample_mask(heatmap_from_prompts(f.map, prompts), 8);
    long long removed = 0;
    for (std::size_t i = 0; i < mask.m.size(); ++i)
      if (!mask.m[i]) removed += f.enc.alloc.k[i];
    EXPECT_EQ(full.report.symbol_count - t.report.symbol_count, removed);
    EXPECT_EQ(static_cast<long long>(t.sent.symbols.size()), t.report.symbol_count);
    long long regions = 0;
    for (const auto& [label, n] : t.report.per_region) regions += n;
    EXPECT_EQ(regions, t.report.symbol_count);
    EXPECT_EQ(t.report.label_map_symbols, full.report.label_map_symbols);
  }
}

TEST(Accounting, SessionReportMatchesReceivedStreams) {
  Fixture f;
  channel::Channel ch(f.cfg);
  auto s = f.session();
  auto r0 = session_report(s, f.model->rate_cfg);
  EXPECT_EQ(r0.symbol_count, 0);
  EXPECT_GT(r0.label_map_symbols, 0.0);
  auto p = session_prompt(s, "car", ch);
  auto r1 = session_report(s, f.model->rate_cfg);
  EXPECT_EQ(r1.symbol_count - r0.symbol_count, p.symbols);
  EXPECT_GT(r1.cbr, r0.cbr);
}

TEST(Dpct, EncodingIsIndependentOfBeta) {
  torch::manual_seed(1);
  DpctModel model(ModelConfig::tiny(), RateConfig::toy());
  auto x = random_image(1, 32, 32, 5);
  channel::ChannelConfig cfg;
  cfg.seed = 3;
  channel::Channel ch(cfg);
  std::vector<ChannelSymbolStream> sent;
  for (double b : {0.0, 4.0, 8.0}) {
    auto t = pipeline_transmit_dpct(model, x, {RealismMap::constant(4, 4, b, 8.0)}, ch, 0);
    sent.push_back(t.sent);
  }
  EXPECT_TRUE(same_stream(sent[0], sent[1]));
  EXPECT_TRUE(same_stream(sent[0], sent[2]));
}

TEST(Dpct, OneChannelUseServesEveryBeta) {
  torch::manual_seed(2);
  DpctModel model(ModelConfig::tiny(), RateConfig::toy());
  auto x = random_image(1, 32, 32, 6);
  channel::Channel ch(channel::ChannelConfig{});
  std::vector<RealismMap> maps;
  for (double b : {0.0, 4.0, 8.0}) maps.push_back(RealismMap::constant(4, 4, b, 8.0));
  auto t = pipeline_transmit_dpct(model, x, maps, ch, 0);
  EXPECT_EQ(ch.uses(), 1);
  ASSERT_EQ(t.reconstructions.size(), 3u);
  // Re-decoding from the received latent reproduces every output.
  torch::NoGradGuard ng;
  for (std::size_t i = 0; i < maps.size(); ++i)
    EXPECT_TRUE(torch::equal(decode_dpct(model, t.y_hat, maps[i]), t.reconstructions[i]));
  EXPECT_THROW(decode_dpct(model, t.y_hat, RealismMap::constant(2, 4, 0.0, 8.0)), RejectedInput);
}

TEST(Wire, MessageRoundTrip) {
  Message m{MessageType::prompt, "s12", 7, pack_json_blob(Json{{"label", "car"}})};
  auto bytes = encode_message(m);
  ASSERT_EQ(bytes.size(), 4 + 1 + 4 + 3 + 8 + m.payload.size());
  EXPECT_EQ(bytes[4], 3);
  std::size_t used = 0;
  EXPECT_EQ(decode_message(bytes, &used), m);
  EXPECT_EQ(used, bytes.size());
  auto [header, blob] = unpack_json_blob(m.payload);
  EXPECT_EQ(header.at("label"), "car");
  EXPECT_TRUE(blob.empty());
}

TEST(Wire, TranscriptAndRejections) {
  std::vector<std::uint8_t> blob{1, 2, 3, 250};
  Message a{MessageType::create_session, "", 0, pack_json_blob(Json{{"mode", "cct"}}, blob)};
  Message b{MessageType::report, "s1", 2, {}};
  auto bytes = encode_message(a);
  auto more = encode_message(b);
  bytes.insert(bytes.end(), more.begin(), more.end());
  auto msgs = decode_messages(bytes);
  ASSERT_EQ(msgs.size(), 2u);
  EXPECT_EQ(msgs[0], a);
  EXPECT_EQ(msgs[1], b);
  EXPECT_EQ(unpack_json_blob(msgs[0].payload).second, blob);

  EXPECT_THROW(decode_message(std::span(bytes).first(10)), RejectedInput);
  auto bad = encode_message(b);
  bad[4] = 42;
  EXPECT_THROW(decode_message(bad), RejectedInput);
  EXPECT_THROW(unpack_json_blob(std::vector<std::uint8_t>{3, 0, 0, 0, '{', '}'}), RejectedInput);
  EXPECT_EQ(to_string(MessageType::decode_request), "DecodeRequest");
}
