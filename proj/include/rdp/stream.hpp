#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdp/rate.hpp"

namespace rdp {

/// Binary transmit mask over the latent grid, raster order.
struct MaskVector {
  std::vector<std::uint8_t> m;

  static MaskVector all(std::size_t l, bool on = true) {
    return MaskVector{std::vector<std::uint8_t>(l, on ? 1 : 0)};
  }
  std::size_t size() const { return m.size(); }
  std::size_t count() const;
  bool operator==(const MaskVector&) const = default;
};

struct SegmentSpan {
  std::size_t position;
  std::size_t offset;
  std::size_t length;
  bool operator==(const SegmentSpan&) const = default;
};

/// Where each transmitted embedding's symbols sit in the flat stream.
std::vector<SegmentSpan> segment_layout(const RateAllocation& alloc, const MaskVector& mask);

/// Real-valued channel symbols with the layout that segments them.
///
/// `alloc` covers every latent position (including masked ones); only positions with
/// `mask[i] == 1` contribute a segment of `alloc.k[i]` symbols, in raster order.
struct ChannelSymbolStream {
  RateAllocation alloc;
  MaskVector mask;
  std::vector<float> symbols;

  std::size_t positions() const { return alloc.size(); }
  long long expected_symbols() const;
  /// Throws RejectedInput naming the first inconsistency between symbols and layout.
  void validate() const;
  std::vector<SegmentSpan> layout() const { return segment_layout(alloc, mask); }
  std::span<const float> segment(const SegmentSpan& s) const {
    return std::span<const float>(symbols).subspan(s.offset, s.length);
  }
};

/// Stream wire format (all integers little-endian):
///
///   u32  l                       number of latent positions
///   u8   index_width             bits per packed rate code
///   u8   mask_flag               1 if explicit mask bits follow
///   ...  rate codes              ceil(l * index_width / 8) bytes, LSB-first
///   ...  mask bits               ceil(l / 8) bytes, LSB-first (only when mask_flag = 1)
///   u32  symbol_count
///   f32  symbols[symbol_count]   segment order
///
/// Without explicit mask bits, position i is transmitted iff its rate code is nonzero.
std::vector<std::uint8_t> serialize_stream(const ChannelSymbolStream& s, const RateConfig& cfg);
ChannelSymbolStream deserialize_stream(std::span<const std::uint8_t> bytes, const RateConfig& cfg,
                                       std::size_t* consumed = nullptr);

}  // namespace rdp
