#include "rdp/rate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rdp/bits.hpp"
#include "rdp/error.hpp"

namespace rdp {

void RateConfig::validate() const {
  RDP_REQUIRE(eta > 0.0, "rate config: eta must be positive");
  RDP_REQUIRE(grid.size() >= 2, "rate config: grid needs at least two values");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    RDP_REQUIRE(grid[i] > 0, "rate config: grid values must be positive");
    if (i > 0) RDP_REQUIRE(grid[i] > grid[i - 1], "rate config: grid must be strictly increasing");
  }
  const int min_bits = static_cast<int>(std::ceil(std::log2(static_cast<double>(grid.size()))));
  RDP_REQUIRE(side_info_bits_per_embedding >= min_bits,
              "rate config: side_info_bits_per_embedding below ceil(log2(|V|))");
  RDP_REQUIRE(bits_per_channel_symbol > 0.0, "rate config: bits_per_channel_symbol must be positive");
}

RateConfig RateConfig::paper() {
  RateConfig cfg;
  cfg.grid = even_integer_grid(26, 1, 320);
  cfg.side_info_bits_per_embedding = 5;
  return cfg;
}

RateConfig RateConfig::toy() {
  RateConfig cfg;
  cfg.grid = even_integer_grid(16, 1, 64);
  cfg.side_info_bits_per_embedding = 5;
  return cfg;
}

std::vector<int> even_integer_grid(int count, int lo, int hi) {
  RDP_REQUIRE(count >= 2 && hi > lo, "even_integer_grid: need count >= 2 and hi > lo");
  std::vector<int> grid;
  grid.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double v = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    grid.push_back(static_cast<int>(std::lround(v)));
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

int rate_index_width(std::size_t grid_size) {
  int bits = 0;
  while ((std::size_t{1} << bits) < grid_size + 1) ++bits;
  return bits;
}

long long RateAllocation::total() const {
  return std::accumulate(k.begin(), k.end(), 0LL);
}

int snap_to_grid(double target, const std::vector<int>& grid) {
  if (!(target > grid.front())) return grid.front();  // also catches NaN
  if (target >= grid.back()) return grid.back();
  auto upper = std::lower_bound(grid.begin(), grid.end(), target,
                                [](int g, double t) { return static_cast<double>(g) < t; });
  const int hi = *upper;
  const int lo = *(upper - 1);
  return (target - lo < hi - target) ? lo : hi;
}

RateAllocation allocate_rates_from_bits(std::span<const double> bits, const RateConfig& cfg) {
  RateAllocation alloc;
  alloc.k.reserve(bits.size());
  for (double b : bits) {
    RDP_REQUIRE(b >= 0.0 && !std::isnan(b), "allocate_rates: information must be nonnegative");
    alloc.k.push_back(snap_to_grid(cfg.eta * b, cfg.grid));
  }
  return alloc;
}

RateAllocation allocate_rates(std::span<const double> likelihoods, const RateConfig& cfg) {
  std::vector<double> bits;
  bits.reserve(likelihoods.size());
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    const double p = likelihoods[i];
    if (!(p > 0.0 && p <= 1.0)) {
      throw RejectedInput("allocate_rates: likelihood at position " + std::to_string(i) +
                          " is outside (0, 1]");
    }
    bits.push_back(-std::log2(p));
  }
  return allocate_rates_from_bits(bits, cfg);
}

BandwidthReport compute_cbr(const RateAllocation& alloc, int width, int height,
                            const RateConfig& cfg, std::span<const std::string> region_of,
                            double label_map_symbols) {
  RDP_REQUIRE(width > 0 && height > 0, "compute_cbr: image size must be positive");
  RDP_REQUIRE(region_of.empty() || region_of.size() == alloc.size(),
              "compute_cbr: region map length differs from allocation length");
  RDP_REQUIRE(label_map_symbols >= 0.0, "compute_cbr: label map cost must be nonnegative");
  BandwidthReport report;
  report.source_dimension = 3LL * width * height;
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    const int k = alloc.k[i];
    RDP_REQUIRE(k >= 0, "compute_cbr: negative symbol count");
    report.symbol_count += k;
    if (!region_of.empty()) report.per_region[region_of[i]] += k;
  }
  report.label_map_symbols = label_map_symbols;
  report.side_info_symbols =
      static_cast<double>(alloc.size()) * cfg.side_info_bits_per_embedding / cfg.bits_per_channel_symbol +
      label_map_symbols;
  report.cbr = (static_cast<double>(report.symbol_count) + report.side_info_symbols) /
               static_cast<double>(report.source_dimension);
  return report;
}

std::vector<std::uint8_t> pack_rate_indices(const RateAllocation& alloc, const RateConfig& cfg) {
  const int width = rate_index_width(cfg.grid.size());
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(alloc.size()));
  BitWriter bits;
  for (std::size_t i = 0; i < alloc.size(); ++i) {
    const int k = alloc.k[i];
    std::uint32_t code = 0;
    if (k != 0) {
      auto it = std::lower_bound(cfg.grid.begin(), cfg.grid.end(), k);
      if (it == cfg.grid.end() || *it != k) {
        throw RejectedInput("pack_rate_indices: k=" + std::to_string(k) + " at position " +
                            std::to_string(i) + " is not a grid member");
      }
      code = static_cast<std::uint32_t>(it - cfg.grid.begin()) + 1;
    }
    bits.put(code, width);
  }
  out.bytes(bits.finish());
  return out.take();
}

RateAllocation unpack_rate_indices(std::span<const std::uint8_t> bytes, const RateConfig& cfg,
                                   std::size_t* consumed) {
  const int width = rate_index_width(cfg.grid.size());
  ByteReader in(bytes);
  const std::uint32_t count = in.u32();
  const std::size_t packed = (static_cast<std::size_t>(count) * width + 7) / 8;
  BitReader bits(in.bytes(packed));
  RateAllocation alloc;
  alloc.k.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t code = bits.get(width);
    if (code > cfg.grid.size()) {
      throw RejectedInput("unpack_rate_indices: code " + std::to_string(code) + " out of range");
    }
    alloc.k.push_back(code == 0 ? 0 : cfg.grid[code - 1]);
  }
  if (consumed) *consumed = in.position();
  return alloc;
}

}  // namespace rdp
