#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace rdp {

/// Quantized rate allocation settings.
///
/// Rates are measured in bits: the allocation target for embedding i is
/// `eta * -log2 p(y_i)`, snapped to the nearest grid member.
struct RateConfig {
  double eta = 0.2;
  std::vector<int> grid;
  int side_info_bits_per_embedding = 5;
  double bits_per_channel_symbol = 4.0;

  void validate() const;

  /// 26 values evenly spread over [1, 320], rounded to integers.
  static RateConfig paper();
  /// 16 values evenly spread over [1, 64].
  static RateConfig toy();
};

/// round(linspace(lo, hi, count)) with duplicates removed.
std::vector<int> even_integer_grid(int count, int lo, int hi);

/// Bits needed to index the grid plus the "not transmitted" code.
int rate_index_width(std::size_t grid_size);

/// Per-embedding channel-symbol counts in raster order. 0 marks an untransmitted embedding.
struct RateAllocation {
  std::vector<int> k;

  std::size_t size() const { return k.size(); }
  long long total() const;
  bool operator==(const RateAllocation&) const = default;
};

/// Nearest grid member to `target`; clamps outside the grid range, ties go to the larger value.
int snap_to_grid(double target, const std::vector<int>& grid);

/// k_i = Q(-eta log2 p_i). Rejects likelihoods outside (0, 1].
RateAllocation allocate_rates(std::span<const double> likelihoods, const RateConfig& cfg);

/// Same quantizer, fed with information content in bits (-log2 p_i) so that very small
/// likelihoods do not underflow.
RateAllocation allocate_rates_from_bits(std::span<const double> bits, const RateConfig& cfg);

struct BandwidthReport {
  long long symbol_count = 0;
  /// Rate-index side information plus any label-map cost, in channel symbols.
  double side_info_symbols = 0.0;
  double label_map_symbols = 0.0;
  double cbr = 0.0;
  long long source_dimension = 0;
  std::map<std::string, long long> per_region;
};

/// CBR accounting for one transmission of an image of `width` x `height` pixels.
///
/// `region_of` optionally names the region owning each embedding; symbol counts are then
/// broken down per region. `label_map_symbols` is added to the side-information term.
BandwidthReport compute_cbr(const RateAllocation& alloc, int width, int height,
                            const RateConfig& cfg,
                            std::span<const std::string> region_of = {},
                            double label_map_symbols = 0.0);

/// Length-prefixed, LSB-first packed grid codes (0 = not transmitted, j = grid[j-1]).
std::vector<std::uint8_t> pack_rate_indices(const RateAllocation& alloc, const RateConfig& cfg);
RateAllocation unpack_rate_indices(std::span<const std::uint8_t> bytes, const RateConfig& cfg,
                                   std::size_t* consumed = nullptr);

}  // namespace rdp
