#include "rdp/label_map.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rdp/bits.hpp"
#include "rdp/error.hpp"

namespace rdp {

InstanceLabelMap InstanceLabelMap::from_rgb(std::span<const std::uint8_t> rgb, int width, int height,
                                            std::vector<RegistryEntry> registry) {
  RDP_REQUIRE(width > 0 && height > 0, "label map: dimensions must be positive");
  RDP_REQUIRE(rgb.size() == static_cast<std::size_t>(width) * height * 3,
              "label map: raster size does not match dimensions");
  RDP_REQUIRE(!registry.empty() && registry.size() < 65536, "label map: registry size out of range");
  std::map<Rgb, std::uint16_t> index;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (!index.emplace(registry[i].rgb, static_cast<std::uint16_t>(i)).second)
      throw RejectedInput("label map: duplicate registry colour for '" + registry[i].label + "'");
  }
  InstanceLabelMap map{width, height, std::move(registry), {}};
  map.instance.resize(static_cast<std::size_t>(width) * height);
  for (std::size_t p = 0; p < map.instance.size(); ++p) {
    const Rgb c{rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]};
    auto it = index.find(c);
    if (it == index.end()) {
      throw RejectedInput("label map: pixel " + std::to_string(p) + " has unregistered colour (" +
                          std::to_string(c[0]) + "," + std::to_string(c[1]) + "," + std::to_string(c[2]) + ")");
    }
    map.instance[p] = it->second;
  }
  return map;
}

std::vector<std::string> InstanceLabelMap::labels() const {
  std::vector<std::string> out;
  for (const auto& e : registry)
    if (std::find(out.begin(), out.end(), e.label) == out.end()) out.push_back(e.label);
  return out;
}

bool InstanceLabelMap::has_label(const std::string& label) const {
  return std::any_of(registry.begin(), registry.end(), [&](const auto& e) { return e.label == label; });
}

std::vector<std::size_t> InstanceLabelMap::present_instances() const {
  std::vector<bool> seen(registry.size(), false);
  for (auto i : instance) seen[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i]) out.push_back(i);
  return out;
}

std::vector<std::uint8_t> InstanceLabelMap::rgb() const {
  std::vector<std::uint8_t> out;
  out.reserve(instance.size() * 3);
  for (auto i : instance) out.insert(out.end(), registry[i].rgb.begin(), registry[i].rgb.end());
  return out;
}

torch::Tensor InstanceLabelMap::to_tensor() const {
  const auto raster = rgb();
  auto t = torch::from_blob(const_cast<std::uint8_t*>(raster.data()), {height, width, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).unsqueeze(0).to(torch::kFloat32).div(255.0).contiguous();
}

void InstanceLabelMap::validate() const {
  RDP_REQUIRE(width > 0 && height > 0, "label map: dimensions must be positive");
  RDP_REQUIRE(instance.size() == static_cast<std::size_t>(width) * height, "label map: raster size mismatch");
  for (auto i : instance) RDP_REQUIRE(i < registry.size(), "label map: instance index outside registry");
}

std::size_t BinaryHeatmap::count() const {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

torch::Tensor BinaryHeatmap::to_tensor() const {
  auto t = torch::empty({1, 1, height, width}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i] ? 1.0f : 0.0f;
  return t;
}

BinaryHeatmap heatmap_from_instances(const InstanceLabelMap& map, const std::set<std::size_t>& instances) {
  BinaryHeatmap h{map.width, map.height, std::vector<std::uint8_t>(map.instance.size(), 0)};
  for (std::size_t p = 0; p < map.instance.size(); ++p)
    h.m[p] = instances.count(map.instance[p]) ? 1 : 0;
  return h;
}

BinaryHeatmap heatmap_from_prompts(const InstanceLabelMap& map, const std::set<std::string>& prompts) {
  std::set<std::size_t> chosen;
  for (const auto& p : prompts) {
    if (!map.has_label(p)) throw RejectedInput("unknown label '" + p + "'");
    for (std::size_t i = 0; i < map.registry.size(); ++i)
      if (map.registry[i].label == p) chosen.insert(i);
  }
  return heatmap_from_instances(map, chosen);
}

MaskVector downsample_mask(const BinaryHeatmap& m, int df) {
  RDP_REQUIRE(df > 0 && m.width % df == 0 && m.height % df == 0,
              "downsample_mask: heatmap size must be divisible by the downsample factor");
  const int w = m.width / df, h = m.height / df;
  MaskVector out{std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.m[static_cast<std::size_t>(y) * m.width + x]) out.m[static_cast<std::size_t>(y / df) * w + x / df] = 1;
  return out;
}

std::vector<std::string> block_owners(const InstanceLabelMap& map, int df) {
  RDP_REQUIRE(df > 0 && map.width % df == 0 && map.height % df == 0,
              "block_owners: label map size must be divisible by the downsample factor");
  const auto labels = map.labels();
  std::vector<std::size_t> label_of(map.registry.size());
  for (std::size_t i = 0; i < map.registry.size(); ++i)
    label_of[i] = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), map.registry[i].label) -
                                           labels.begin());
  const int w = map.width / df, h = map.height / df;
  std::vector<std::string> owners;
  owners.reserve(static_cast<std::size_t>(w) * h);
  std::vector<int> votes(labels.size());
  for (int by = 0; by < h; ++by) {
    for (int bx = 0; bx < w; ++bx) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int y = by * df; y < (by + 1) * df; ++y)
        for (int x = bx * df; x < (bx + 1) * df; ++x)
          ++votes[label_of[map.instance[static_cast<std::size_t>(y) * map.width + x]]];
      // max_element keeps the first maximum, i.e. registry order on ties.
      owners.push_back(labels[static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin())]);
    }
  }
  return owners;
}

InstanceSelection sample_instance_mask(const InstanceLabelMap& map, double fraction, std::mt19937_64& rng) {
  RDP_REQUIRE(fraction > 0.0 && fraction <= 1.0, "sample_instance_mask: fraction must lie in (0, 1]");
  auto present = map.present_instances();
  RDP_REQUIRE(!present.empty(), "sample_instance_mask: label map has no instances");
  const auto n = present.size();
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n))));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(present[i], present[pick(rng)]);
  }
  InstanceSelection sel;
  sel.instances.insert(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(k));
  sel.heatmap = heatmap_from_instances(map, sel.instances);
  return sel;
}

std::vector<std::uint8_t> encode_label_map_rle(const InstanceLabelMap& map) {
  map.validate();
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(map.width));
  out.u32(static_cast<std::uint32_t>(map.height));
  out.u16(static_cast<std::uint16_t>(map.registry.size()));
  for (const auto& e : map.registry) {
    for (auto c : e.rgb) out.u8(c);
    out.str(e.label);
  }
  std::size_t p = 0;
  while (p < map.instance.size()) {
    std::size_t q = p + 1;
    while (q < map.instance.size() && map.instance[q] == map.instance[p]) ++q;
    out.varint(q - p);
    out.varint(map.instance[p]);
    p = q;
  }
  return out.take();
}

InstanceLabelMap decode_label_map_rle(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  InstanceLabelMap map;
  map.width = static_cast<int>(in.u32());
  map.height = static_cast<int>(in.u32());
  RDP_REQUIRE(map.width > 0 && map.height > 0 && static_cast<long long>(map.width) * map.height <= (1LL << 28),
              "label map: implausible dimensions");
  const auto n = in.u16();
  for (std::uint16_t i = 0; i < n; ++i) {
    RegistryEntry e;
    for (auto& c : e.rgb) c = in.u8();
    e.label = in.str();
    map.registry.push_back(std::move(e));
  }
  const auto total = static_cast<std::size_t>(map.width) * map.height;
  map.instance.reserve(total);
  while (map.instance.size() < total) {
    const auto run = in.varint();
    const auto idx = in.varint();
    RDP_REQUIRE(run >= 1 && run <= total - map.instance.size(), "label map: run overflows the raster");
    RDP_REQUIRE(idx < map.registry.size(), "label map: palette index out of range");
    map.instance.insert(map.instance.end(), run, static_cast<std::uint16_t>(idx));
  }
  RDP_REQUIRE(in.remaining() == 0, "label map: trailing bytes after the raster");
  return map;
}

double label_map_symbols(const InstanceLabelMap& map, double bits_per_channel_symbol) {
  return static_cast<double>(encode_label_map_rle(map).size()) * 8.0 / bits_per_channel_symbol;
}

}  // namespace rdp
