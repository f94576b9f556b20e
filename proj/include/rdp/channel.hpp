#pragma once

#include <atomic>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace rdp::channel {

enum class Kind { awgn, rayleigh };
enum class Equalization { none, zero_forcing };

Kind parse_kind(const std::string& s);
Equalization parse_equalization(const std::string& s);
std::string to_string(Kind k);
std::string to_string(Equalization e);

struct ChannelConfig {
  Kind kind = Kind::awgn;
  /// +infinity disables noise entirely.
  double snr_db = 10.0;
  std::uint64_t seed = 0;
  Equalization equalization = Equalization::zero_forcing;

  static constexpr double noiseless = std::numeric_limits<double>::infinity();

  void validate() const;
  /// Noise variance per complex symbol, 10^(-snr/10); 0 when noiseless.
  double noise_variance() const;
};

struct ChannelRealization {
  std::vector<std::complex<double>> gains;
  std::vector<std::complex<double>> noise;

  std::size_t size() const { return gains.size(); }
};

struct Normalized {
  std::vector<float> symbols;
  double scale = 1.0;
};

/// Scales the stream to unit mean power per real symbol. All-zero or empty input is
/// returned unchanged with scale 1.
Normalized power_normalize(std::span<const float> s);

/// Draws gains and noise for `complex_len` complex channel uses from stream `stream_id` of
/// the configured seed.
ChannelRealization draw_realization(std::size_t complex_len, const ChannelConfig& cfg,
                                    std::uint64_t stream_id = 0);

/// Passes power-normalized real symbols through a realization.
///
/// Consecutive real symbols (2j, 2j+1) form complex symbol j = (s_2j + i s_2j+1) / sqrt(2),
/// so a unit-power real stream maps to unit-power complex symbols. `first_slot` is the
/// real-slot index of `normalized[0]` inside the realization. Every valid configuration
/// (AWGN, or Rayleigh with zero forcing) leaves each real slot independent of its pair
/// partner, so slices of a stream can be sent separately.
std::vector<float> pass_through(std::span<const float> normalized, const ChannelRealization& r,
                                const ChannelConfig& cfg, std::size_t first_slot = 0);

/// Per-real-slot additive noise in normalized units: received = normalized + effective_noise.
std::vector<double> effective_noise(const ChannelRealization& r, const ChannelConfig& cfg,
                                    std::size_t real_len);

/// Unnormalized counterpart of pass_through: `s` is the raw stream slice and `scale` the
/// power-normalization scale of the whole stream it came from.
std::vector<float> receive_slots(std::span<const float> s, double scale, const ChannelRealization& r,
                                 const ChannelConfig& cfg, std::size_t first_slot = 0);

struct Transmission {
  std::vector<float> received;
  ChannelRealization realization;
  double scale = 1.0;
};

/// Normalize, pair into complex symbols, apply h * s + n (and zero forcing), unpair and
/// undo the normalization.
Transmission transmit(std::span<const float> s, const ChannelConfig& cfg, std::uint64_t stream_id = 0);

/// A configured channel that counts how many times it has been used.
class Channel {
public:
  explicit Channel(ChannelConfig cfg);

  const ChannelConfig& config() const { return cfg_; }
  Transmission transmit(std::span<const float> s, std::uint64_t stream_id) const;
  /// Sends a slice of a stream (whose normalization scale is `scale`) over the matching
  /// slice of `r`.
  std::vector<float> transmit_slots(std::span<const float> s, double scale,
                                    const ChannelRealization& r, std::size_t first_slot) const;
  /// One use carrying symbol j over real slot `slots[j]` of `r`.
  std::vector<float> transmit_gather(std::span<const float> s, std::span<const std::size_t> slots, double scale,
                                     const ChannelRealization& r) const;
  long long uses() const { return uses_.load(); }

private:
  ChannelConfig cfg_;
  mutable std::atomic<long long> uses_{0};
};

/// CSV trace: index,sent,gain_re,gain_im,noise_re,noise_im,received
void write_trace_csv(std::ostream& os, std::span<const float> sent, const Transmission& t);

}  // namespace rdp::channel
