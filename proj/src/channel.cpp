#include "rdp/channel.hpp"

#include <cmath>
#include <ostream>
#include <random>

#include "rdp/error.hpp"

namespace rdp::channel {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrt2 = 1.41421356237309504880;

// Noise seen by real slot `slot` after unpairing. With zero forcing the equalized complex
// symbol is c + n/h, so every real slot depends only on its own sent value.
double slot_noise(const ChannelRealization& r, const ChannelConfig& cfg, std::size_t slot) {
  const std::size_t p = slot / 2;
  const std::complex<double> e = cfg.kind == Kind::awgn ? r.noise[p] : r.noise[p] / r.gains[p];
  return kSqrt2 * (slot % 2 == 0 ? e.real() : e.imag());
}

}  // namespace

Kind parse_kind(const std::string& s) {
  if (s == "awgn") return Kind::awgn;
  if (s == "rayleigh") return Kind::rayleigh;
  throw RejectedInput("channel: unknown kind '" + s + "'");
}

Equalization parse_equalization(const std::string& s) {
  if (s == "none") return Equalization::none;
  if (s == "zero_forcing" || s == "zf") return Equalization::zero_forcing;
  throw RejectedInput("channel: unknown equalization '" + s + "'");
}

std::string to_string(Kind k) { return k == Kind::awgn ? "awgn" : "rayleigh"; }
std::string to_string(Equalization e) { return e == Equalization::none ? "none" : "zero_forcing"; }

void ChannelConfig::validate() const {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw RejectedInput("channel: snr_db must be finite or +inf (noiseless)");
  if (kind == Kind::rayleigh && equalization != Equalization::zero_forcing)
    throw RejectedInput("channel: rayleigh fading requires zero_forcing equalization (perfect CSI)");
}

double ChannelConfig::noise_variance() const {
  if (std::isinf(snr_db)) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

Normalized power_normalize(std::span<const float> s) {
  Normalized out;
  out.symbols.assign(s.begin(), s.end());
  if (s.empty()) return out;
  double energy = 0.0;
  for (float v : s) energy += static_cast<double>(v) * v;
  if (energy == 0.0) return out;
  out.scale = std::sqrt(energy / static_cast<double>(s.size()));
  for (auto& v : out.symbols) v = static_cast<float>(v / out.scale);
  return out;
}

ChannelRealization draw_realization(std::size_t complex_len, const ChannelConfig& cfg,
                                    std::uint64_t stream_id) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> unit(0.0, 1.0);

  ChannelRealization r;
  r.gains.assign(complex_len, {1.0, 0.0});
  r.noise.assign(complex_len, {0.0, 0.0});
  if (cfg.kind == Kind::rayleigh) {
    // CN(0, 1): each component has variance 1/2.
    for (auto& h : r.gains) h = {unit(rng) * kInvSqrt2, unit(rng) * kInvSqrt2};
  }
  const double sigma = std::sqrt(cfg.noise_variance() / 2.0);
  if (sigma > 0.0) {
    for (auto& n : r.noise) n = {unit(rng) * sigma, unit(rng) * sigma};
  }
  return r;
}

std::vector<double> effective_noise(const ChannelRealization& r, const ChannelConfig& cfg,
                                    std::size_t real_len) {
  cfg.validate();
  RDP_REQUIRE(r.size() * 2 >= real_len, "channel: realization shorter than the stream");
  std::vector<double> out(real_len);
  for (std::size_t j = 0; j < real_len; ++j) out[j] = slot_noise(r, cfg, j);
  return out;
}

std::vector<float> pass_through(std::span<const float> normalized, const ChannelRealization& r,
                                const ChannelConfig& cfg, std::size_t first_slot) {
  cfg.validate();
  const std::size_t n = normalized.size();
  RDP_REQUIRE(r.size() * 2 >= first_slot + n, "channel: realization shorter than the stream");
  std::vector<float> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t slot = first_slot + j;
    out[j] = static_cast<float>(static_cast<double>(normalized[j]) + slot_noise(r, cfg, slot));
  }
  return out;
}

std::vector<float> receive_slots(std::span<const float> s, double scale, const ChannelRealization& r,
                                 const ChannelConfig& cfg, std::size_t first_slot) {
  cfg.validate();
  RDP_REQUIRE(r.size() * 2 >= first_slot + s.size(), "channel: realization shorter than the stream");
  // scale * (s / scale + e) written as s + scale * e so a noiseless channel is exact.
  std::vector<float> out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j)
    out[j] = static_cast<float>(static_cast<double>(s[j]) + scale * slot_noise(r, cfg, first_slot + j));
  return out;
}

Transmission transmit(std::span<const float> s, const ChannelConfig& cfg, std::uint64_t stream_id) {
  cfg.validate();
  Transmission t;
  t.scale = power_normalize(s).scale;
  t.realization = draw_realization((s.size() + 1) / 2, cfg, stream_id);
  t.received = receive_slots(s, t.scale, t.realization, cfg, 0);
  return t;
}

Channel::Channel(ChannelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

Transmission Channel::transmit(std::span<const float> s, std::uint64_t stream_id) const {
  ++uses_;
  return channel::transmit(s, cfg_, stream_id);
}

std::vector<float> Channel::transmit_slots(std::span<const float> s, double scale,
                                           const ChannelRealization& r, std::size_t first_slot) const {
  ++uses_;
  return receive_slots(s, scale, r, cfg_, first_slot);
}

std::vector<float> Channel::transmit_gather(std::span<const float> s, std::span<const std::size_t> slots,
                                            double scale, const ChannelRealization& r) const {
  RDP_REQUIRE(s.size() == slots.size(), "channel: one slot index per symbol required");
  std::vector<float> out(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    RDP_REQUIRE(slots[j] < r.size() * 2, "channel: slot outside the realization");
    out[j] = static_cast<float>(static_cast<double>(s[j]) + scale * slot_noise(r, cfg_, slots[j]));
  }
  ++uses_;
  return out;
}

void write_trace_csv(std::ostream& os, std::span<const float> sent, const Transmission& t) {
  os << "index,sent,gain_re,gain_im,noise_re,noise_im,received\n";
  for (std::size_t j = 0; j < sent.size(); ++j) {
    const auto& h = t.realization.gains[j / 2];
    const auto& n = t.realization.noise[j / 2];
    os << j << ',' << sent[j] << ',' << h.real() << ',' << h.imag() << ',' << n.real() << ','
       << n.imag() << ',' << t.received[j] << '\n';
  }
}

}  // namespace rdp::channel
