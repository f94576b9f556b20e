#include "rdp/stream.hpp"

#include <algorithm>
#include <string>

#include "rdp/bits.hpp"
#include "rdp/error.hpp"

namespace rdp {

std::size_t MaskVector::count() const {
  return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; }));
}

std::vector<SegmentSpan> segment_layout(const RateAllocation& alloc, const MaskVector& mask) {
  RDP_REQUIRE(alloc.size() == mask.size(), "segment_layout: allocation and mask lengths differ");
  std::vector<SegmentSpan> out;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    if (!mask.m[i]) continue;
    const auto len = static_cast<std::size_t>(alloc.k[i]);
    out.push_back({i, offset, len});
    offset += len;
  }
  return out;
}

long long ChannelSymbolStream::expected_symbols() const {
  long long total = 0;
  for (std::size_t i = 0; i < alloc.size(); ++i)
    if (mask.m[i]) total += alloc.k[i];
  return total;
}

void ChannelSymbolStream::validate() const {
  if (alloc.size() != mask.size()) {
    throw RejectedInput("stream: allocation covers " + std::to_string(alloc.size()) +
                        " positions but mask covers " + std::to_string(mask.size()));
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    if (!mask.m[i]) continue;
    if (alloc.k[i] <= 0) {
      throw RejectedInput("stream: transmitted position " + std::to_string(i) +
                          " has no allocated symbols");
    }
    offset += static_cast<std::size_t>(alloc.k[i]);
    if (offset > symbols.size()) {
      throw RejectedInput("stream: segment at position " + std::to_string(i) +
                          " extends past the " + std::to_string(symbols.size()) + " received symbols");
    }
  }
  if (offset != symbols.size()) {
    throw RejectedInput("stream: " + std::to_string(symbols.size() - offset) +
                        " trailing symbols after the last segment");
  }
}

std::vector<std::uint8_t> serialize_stream(const ChannelSymbolStream& s, const RateConfig& cfg) {
  s.validate();
  const int width = rate_index_width(cfg.grid.size());
  bool implicit_mask = true;
  for (std::size_t i = 0; i < s.positions(); ++i)
    if ((s.alloc.k[i] != 0) != (s.mask.m[i] != 0)) implicit_mask = false;

  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(s.positions()));
  out.u8(static_cast<std::uint8_t>(width));
  out.u8(implicit_mask ? 0 : 1);
  // Rate codes start after our own length prefix; reuse the packer and drop its prefix.
  const auto packed = pack_rate_indices(s.alloc, cfg);
  out.bytes(std::span<const std::uint8_t>(packed).subspan(4));
  if (!implicit_mask) {
    BitWriter bits;
    for (auto v : s.mask.m) bits.put(v ? 1u : 0u, 1);
    out.bytes(bits.finish());
  }
  out.u32(static_cast<std::uint32_t>(s.symbols.size()));
  for (float v : s.symbols) out.f32(v);
  return out.take();
}

ChannelSymbolStream deserialize_stream(std::span<const std::uint8_t> bytes, const RateConfig& cfg,
                                       std::size_t* consumed) {
  ByteReader in(bytes);
  const std::uint32_t l = in.u32();
  const int width = in.u8();
  const std::uint8_t mask_flag = in.u8();
  if (width != rate_index_width(cfg.grid.size())) {
    throw RejectedInput("stream: index width " + std::to_string(width) +
                        " does not match the configured grid");
  }
  RDP_REQUIRE(mask_flag <= 1, "stream: bad mask flag");

  ChannelSymbolStream s;
  {
    BitReader bits(in.bytes((static_cast<std::size_t>(l) * width + 7) / 8));
    s.alloc.k.reserve(l);
    for (std::uint32_t i = 0; i < l; ++i) {
      const auto code = bits.get(width);
      RDP_REQUIRE(code <= cfg.grid.size(), "stream: rate code out of range");
      s.alloc.k.push_back(code == 0 ? 0 : cfg.grid[code - 1]);
    }
  }
  if (mask_flag) {
    BitReader bits(in.bytes((static_cast<std::size_t>(l) + 7) / 8));
    s.mask.m.resize(l);
    for (std::uint32_t i = 0; i < l; ++i) s.mask.m[i] = static_cast<std::uint8_t>(bits.get(1));
  } else {
    s.mask.m.resize(l);
    for (std::uint32_t i = 0; i < l; ++i) s.mask.m[i] = s.alloc.k[i] != 0 ? 1 : 0;
  }
  const std::uint32_t n = in.u32();
  s.symbols.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) s.symbols[i] = in.f32();
  s.validate();
  if (consumed) *consumed = in.position();
  return s;
}

}  // namespace rdp
