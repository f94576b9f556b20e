#include "rdp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "rdp/error.hpp"
#include "rdp/image_io.hpp"

namespace rdp {

namespace fs = std::filesystem;

namespace {

struct Color {
  float r, g, b;
};

/// Canvas with a parallel instance raster.
class Scene {
public:
  Scene(int size, std::mt19937_64& rng) : n_(size), rgb_(static_cast<std::size_t>(size) * size * 3), id_(static_cast<std::size_t>(size) * size), rng_(rng) {}

  std::uint16_t add_instance(const std::string& label, Rgb base) {
    int k = 0;
    for (const auto& e : registry_) k += e.label == label;
    base[2] = static_cast<std::uint8_t>(base[2] - 3 * k);
    registry_.push_back({base, label});
    return static_cast<std::uint16_t>(registry_.size() - 1);
  }

  void paint(int x, int y, Color c, std::uint16_t id) {
    if (x < 0 || y < 0 || x >= n_ || y >= n_) return;
    const auto p = static_cast<std::size_t>(y) * n_ + x;
    rgb_[3 * p] = c.r;
    rgb_[3 * p + 1] = c.g;
    rgb_[3 * p + 2] = c.b;
    id_[p] = id;
  }

  float uniform(float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  /// Smooth value noise in [0, 1] with the given cell size.
  std::vector<float> value_noise(int cell) {
    const int g = n_ / cell + 2;
    std::vector<float> grid(static_cast<std::size_t>(g) * g);
    for (auto& v : grid) v = uniform(0.0f, 1.0f);
    std::vector<float> out(static_cast<std::size_t>(n_) * n_);
    for (int y = 0; y < n_; ++y) {
      for (int x = 0; x < n_; ++x) {
        const float fx = static_cast<float>(x) / cell, fy = static_cast<float>(y) / cell;
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const float tx = fx - x0, ty = fy - y0;
        auto at = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * g + i]; };
        const float top = at(x0, y0) * (1 - tx) + at(x0 + 1, y0) * tx;
        const float bot = at(x0, y0 + 1) * (1 - tx) + at(x0 + 1, y0 + 1) * tx;
        out[static_cast<std::size_t>(y) * n_ + x] = top * (1 - ty) + bot * ty;
      }
    }
    return out;
  }

  Sample finish(float grain) {
    std::normal_distribution<float> noise(0.0f, grain);
    auto img = torch::empty({3, n_, n_}, torch::kFloat32);
    auto a = img.accessor<float, 3>();
    for (int y = 0; y < n_; ++y)
      for (int x = 0; x < n_; ++x)
        for (int c = 0; c < 3; ++c)
          a[c][y][x] = std::clamp(rgb_[3 * (static_cast<std::size_t>(y) * n_ + x) + c] + noise(rng_), 0.0f, 1.0f);
    InstanceLabelMap map{n_, n_, registry_, id_};
    return {img, map};
  }

  int n() const { return n_; }

private:
  int n_;
  std::vector<float> rgb_;
  std::vector<std::uint16_t> id_;
  std::vector<RegistryEntry> registry_;
  std::mt19937_64& rng_;
};

Color shade(Color c, float f) { return {c.r * f, c.g * f, c.b * f}; }

}  // namespace

SyntheticScenes::SyntheticScenes(std::size_t count, int size, std::uint64_t seed)
    : count_(count), size_(size), seed_(seed) {
  RDP_REQUIRE(count > 0 && size >= 16, "synthetic scenes: need count > 0 and size >= 16");
}

std::vector<std::string> SyntheticScenes::label_names() {
  return {"sky", "road", "building", "tree", "car", "people"};
}

Sample SyntheticScenes::get(std::size_t index) const {
  RDP_REQUIRE(index < count_, "synthetic scenes: index out of range");
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(index), 0x5ce7eu};
  std::mt19937_64 rng(seq);
  Scene s(size_, rng);
  const int n = s.n();
  const int horizon = static_cast<int>(n * s.uniform(0.35f, 0.5f));

  const auto sky = s.add_instance("sky", {70, 130, 180});
  const auto clouds = s.value_noise(std::max(2, n / 8));
  const Color top{s.uniform(0.2f, 0.4f), s.uniform(0.45f, 0.6f), s.uniform(0.75f, 0.95f)};
  for (int y = 0; y < horizon; ++y) {
    const float t = static_cast<float>(y) / std::max(1, horizon);
    for (int x = 0; x < n; ++x) {
      const float cl = 0.25f * clouds[static_cast<std::size_t>(y) * n + x];
      s.paint(x, y, {top.r + 0.3f * t + cl, top.g + 0.2f * t + cl, top.b + 0.05f * t + cl}, sky);
    }
  }

  const auto road = s.add_instance("road", {128, 64, 128});
  const float asphalt = s.uniform(0.3f, 0.45f);
  const auto grit = s.value_noise(2);
  for (int y = horizon; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const float v = asphalt + 0.12f * (grit[static_cast<std::size_t>(y) * n + x] - 0.5f);
      const bool lane = std::abs(x - n / 2) <= std::max(1, n / 64) && ((y / std::max(2, n / 16)) % 2 == 0);
      s.paint(x, y, lane ? Color{0.9f, 0.9f, 0.85f} : Color{v, v, v * 1.02f}, road);
    }
  }

  for (int b = 0, count = s.integer(1, 3); b < count; ++b) {
    const auto id = s.add_instance("building", {70, 70, 70});
    const int w = static_cast<int>(n * s.uniform(0.15f, 0.35f));
    const int x0 = s.integer(0, n - w);
    const int y0 = horizon - static_cast<int>(n * s.uniform(0.12f, 0.35f));
    const int y1 = horizon + n / 20;
    const Color wall{s.uniform(0.4f, 0.75f), s.uniform(0.3f, 0.6f), s.uniform(0.25f, 0.55f)};
    const int pitch = std::max(3, n / 16);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        const bool window = ((x - x0) % pitch >= 1) && ((x - x0) % pitch < pitch - 1) && ((y - y0) % pitch >= 1) &&
                            ((y - y0) % pitch < pitch - 1) && y < horizon;
        s.paint(x, y, window ? Color{0.15f, 0.2f, 0.3f} : shade(wall, 0.9f + 0.2f * ((x + y) % 2)), id);
      }
  }

  for (int t = 0, count = s.integer(0, 2); t < count; ++t) {
    const auto id = s.add_instance("tree", {107, 142, 35});
    const int r = std::max(2, static_cast<int>(n * s.uniform(0.06f, 0.12f)));
    const int cx = s.integer(r, n - r - 1), cy = horizon - r;
    const auto leaves = s.value_noise(2);
    for (int y = cy; y < horizon + n / 16; ++y)
      for (int x = cx - std::max(1, r / 4); x <= cx + std::max(1, r / 4); ++x) s.paint(x, y, {0.35f, 0.22f, 0.1f}, id);
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) {
          const float v = leaves[static_cast<std::size_t>(std::clamp(y, 0, n - 1)) * n + std::clamp(x, 0, n - 1)];
          s.paint(x, y, {0.1f + 0.15f * v, 0.35f + 0.35f * v, 0.1f + 0.1f * v}, id);
        }
  }

  for (int c = 0, count = s.integer(1, 2); c < count; ++c) {
    const auto id = s.add_instance("car", {0, 0, 142});
    const int w = static_cast<int>(n * s.uniform(0.15f, 0.25f));
    const int h = std::max(3, static_cast<int>(n * s.uniform(0.08f, 0.12f)));
    const int x0 = s.integer(0, n - w);
    const int y0 = s.integer(horizon + n / 10, std::max(horizon + n / 10, n - h - n / 16));
    const Color body{s.uniform(0.1f, 0.95f), s.uniform(0.05f, 0.5f), s.uniform(0.05f, 0.9f)};
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) {
        const bool glass = y < y0 + h / 3 && x > x0 + w / 5 && x < x0 + 4 * w / 5;
        s.paint(x, y, glass ? Color{0.6f, 0.75f, 0.85f} : body, id);
      }
    const int wr = std::max(1, h / 4);
    for (int cx : {x0 + w / 5, x0 + 4 * w / 5})
      for (int y = y0 + h - wr; y <= y0 + h + wr; ++y)
        for (int x = cx - wr; x <= cx + wr; ++x)
          if ((x - cx) * (x - cx) + (y - y0 - h) * (y - y0 - h) <= wr * wr) s.paint(x, y, {0.05f, 0.05f, 0.05f}, id);
  }

  for (int p = 0, count = s.integer(0, 2); p < count; ++p) {
    const auto id = s.add_instance("people", {220, 20, 60});
    const int h = std::max(4, n / 8), w = std::max(2, n / 24);
    const int x0 = s.integer(0, n - w - 1);
    const int y0 = s.integer(horizon - h / 2, std::max(horizon - h / 2, n - h - 1));
    const Color shirt{s.uniform(0.1f, 0.9f), s.uniform(0.1f, 0.9f), s.uniform(0.1f, 0.9f)};
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        s.paint(x, y, y < y0 + h / 4 ? Color{0.85f, 0.65f, 0.5f} : (y < y0 + 2 * h / 3 ? shirt : Color{0.15f, 0.15f, 0.3f}), id);
  }
  return s.finish(0.02f);
}

// ---------------------------------------------------------------------------------------------

std::vector<RegistryEntry> read_registry_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open registry " + path);
  const auto j = Json::parse(in);
  RDP_REQUIRE(j.is_array(), "registry: expected a list of {rgb, label}");
  std::vector<RegistryEntry> out;
  for (const auto& e : j) {
    const auto rgb = e.at("rgb").get<std::vector<int>>();
    RDP_REQUIRE(rgb.size() == 3, "registry: rgb needs three components");
    out.push_back({Rgb{static_cast<std::uint8_t>(rgb[0]), static_cast<std::uint8_t>(rgb[1]),
                       static_cast<std::uint8_t>(rgb[2])},
                   e.at("label").get<std::string>()});
  }
  return out;
}

ImageDirectory::ImageDirectory(const DatasetSpec& spec, bool holdout) : spec_(spec), holdout_(holdout) {
  if (!fs::is_directory(spec.directory)) throw NotFound("dataset directory " + spec.directory + " does not exist");
  std::vector<std::string> all;
  for (const auto& e : fs::directory_iterator(spec.directory)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") all.push_back(e.path().string());
  }
  RDP_REQUIRE(!all.empty(), "dataset directory " + spec.directory + " contains no PNG images");
  std::sort(all.begin(), all.end());
  std::mt19937_64 rng(spec.seed);
  std::shuffle(all.begin(), all.end(), rng);
  auto n_hold = static_cast<std::size_t>(std::lround(spec.holdout_fraction * static_cast<double>(all.size())));
  if (spec.holdout_fraction > 0.0) n_hold = std::clamp<std::size_t>(n_hold, 1, all.size() - 1);
  files_ = holdout ? std::vector<std::string>(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_hold))
                   : std::vector<std::string>(all.begin() + static_cast<std::ptrdiff_t>(n_hold), all.end());
  RDP_REQUIRE(!files_.empty(), "dataset split is empty");
  const auto reg = fs::path(spec.directory) / "registry.json";
  if (fs::exists(reg)) registry_ = read_registry_json(reg.string());
}

Sample ImageDirectory::get(std::size_t index) const {
  RDP_REQUIRE(index < files_.size(), "image directory: index out of range");
  auto img = read_png(files_[index]);
  std::optional<RgbImage> labels;
  const auto label_path = fs::path(spec_.directory) / "labels" / fs::path(files_[index]).filename();
  if (!registry_.empty() && fs::exists(label_path)) {
    labels = read_png(label_path);
    RDP_REQUIRE(labels->width == img.width && labels->height == img.height,
                "label map " + label_path.string() + " does not match its image size");
  }
  int factor = 1;
  if (spec_.resize == "downscale") factor = std::max(1, std::min(img.width, img.height) / spec_.crop_size);
  const int c = spec_.crop_size;
  RDP_REQUIRE(img.width / factor >= c && img.height / factor >= c,
              "image " + files_[index] + " is smaller than the crop size");
  std::seed_seq seq{static_cast<std::uint32_t>(spec_.seed), static_cast<std::uint32_t>(index), 0xc409u};
  std::mt19937_64 rng(seq);
  const int max_x = img.width / factor - c, max_y = img.height / factor - c;
  const int ox = holdout_ ? max_x / 2 : std::uniform_int_distribution<int>(0, max_x)(rng);
  const int oy = holdout_ ? max_y / 2 : std::uniform_int_distribution<int>(0, max_y)(rng);

  RgbImage crop{c, c, std::vector<std::uint8_t>(static_cast<std::size_t>(c) * c * 3)};
  RgbImage label_crop = crop;
  for (int y = 0; y < c; ++y)
    for (int x = 0; x < c; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        int acc = 0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += img.pixels[3 * (static_cast<std::size_t>((oy + y) * factor + dy) * img.width + (ox + x) * factor + dx) + ch];
        const auto dst = 3 * (static_cast<std::size_t>(y) * c + x) + ch;
        crop.pixels[dst] = static_cast<std::uint8_t>((acc + factor * factor / 2) / (factor * factor));
        // Labels are nearest-sampled so no new colours appear.
        if (labels)
          label_crop.pixels[dst] = labels->pixels[3 * (static_cast<std::size_t>((oy + y) * factor) * labels->width + (ox + x) * factor) + ch];
      }
  Sample s{rgb_to_tensor(crop), std::nullopt};
  if (labels) s.labels = InstanceLabelMap::from_rgb(label_crop.pixels, c, c, registry_);
  return s;
}

std::unique_ptr<Dataset> make_dataset(const DatasetSpec& spec, bool holdout) {
  if (spec.kind == "directory") return std::make_unique<ImageDirectory>(spec, holdout);
  // Holdout scenes come from a disjoint seed stream.
  if (holdout)
    return std::make_unique<SyntheticScenes>(static_cast<std::size_t>(std::max(1, spec.holdout_count)), spec.crop_size,
                                             spec.seed ^ 0x9e3779b97f4a7c15ULL);
  return std::make_unique<SyntheticScenes>(static_cast<std::size_t>(spec.synthetic_count), spec.crop_size, spec.seed);
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b;
  std::vector<torch::Tensor> images;
  for (auto i : indices) {
    auto s = data.get(i);
    images.push_back(s.image);
    if (s.labels) b.labels.push_back(std::move(*s.labels));
  }
  b.images = torch::stack(images);
  if (!b.labels.empty() && b.labels.size() != indices.size())
    throw RejectedInput("batch mixes samples with and without label maps");
  return b;
}

BatchSampler::BatchSampler(std::size_t size, std::uint64_t seed) : order_(size), rng_(seed) {
  RDP_REQUIRE(size > 0, "batch sampler: empty dataset");
  for (std::size_t i = 0; i < size; ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
}

std::vector<std::size_t> BatchSampler::next(std::size_t batch) {
  std::vector<std::size_t> out;
  while (out.size() < batch) {
    if (pos_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

}  // namespace rdp
