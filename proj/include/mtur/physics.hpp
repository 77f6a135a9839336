#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mtur/image.hpp"

namespace mtur::physics {

/// Ambient (back-scattered) light colour. Every channel lies in (0, 1].
struct Airlight {
  double r = 1.0, g = 1.0, b = 1.0;

  double operator[](std::size_t c) const noexcept { return c == 0 ? r : c == 1 ? g : b; }
  void validate() const;
};

enum class MapRole { true_t, estimated, predicted };

/// Per-pixel transmission in [0, 1] together with its provenance.
struct TransmissionMap {
  ImageGray values;
  MapRole role = MapRole::true_t;

  std::size_t height() const noexcept { return values.height(); }
  std::size_t width() const noexcept { return values.width(); }
};

struct PhysicsParams {
  std::size_t patch_radius = 7;    // square patch of (2r + 1)^2 pixels
  double airlight_quantile = 0.001;  // brightest fraction of the dark channel
  double t0 = 0.1;                   // lower bound on the inversion divisor

  void validate() const;
};

inline constexpr double kAirlightFloor = 0.05;

/// Per pixel: min over the edge-replicated (2r+1)^2 patch of min_c I^c / A^c,
/// clamped to [0, 1].
ImageGray dark_channel(const ImageRGB& img, const Airlight& airlight, std::size_t patch_radius);

/// Sliding-window minimum with edge replication (separable, O(1) per pixel).
ImageGray min_filter(const ImageGray& src, std::size_t radius);

/// Mean colour of the brightest `airlight_quantile` fraction of pixels in the
/// plain dark channel (A = 1), each channel clamped to [kAirlightFloor, 1].
/// Ties are broken by pixel index so the result is deterministic.
Airlight estimate_airlight(const ImageRGB& img, const PhysicsParams& params);

/// 1 - dark_channel(img, A, r), clamped to [0, 1].
TransmissionMap estimate_mt(const ImageRGB& img, const Airlight& airlight, std::size_t patch_radius);

/// I = J T + A (1 - T), per channel, clamped to [0, 1].
ImageRGB degrade(const ImageRGB& clean, const TransmissionMap& t, const Airlight& airlight);
/// Same with a separate transmission per colour channel (r, g, b).
ImageRGB degrade(const ImageRGB& clean, const std::array<TransmissionMap, 3>& t, const Airlight& airlight);

/// J = (I - A (1 - T)) / max(T, t0), clamped to [0, 1].
ImageRGB invert_restore(const ImageRGB& img, const TransmissionMap& t, const Airlight& airlight, double t0);

// ------------------------------------------------------------ synthesis

enum class DepthStyle { constant, linear_ramp, perlin };

/// Scene depth in arbitrary distance units (not clamped to [0, 1]).
struct DepthField {
  std::size_t height = 0, width = 0;
  std::vector<double> values;
};

/// Scene depth in [0, d_max]. `constant` yields d_max everywhere; the ramp
/// direction and the noise field are drawn from `seed`.
DepthField synth_depth(std::size_t height, std::size_t width, std::uint64_t seed, DepthStyle style, double d_max);

/// exp(-beta * d) per pixel.
TransmissionMap transmission_from_depth(const DepthField& depth, double beta);

/// Scalar-attenuation transmission map.
TransmissionMap synth_transmission(std::size_t height, std::size_t width, std::uint64_t seed, double beta,
                                   DepthStyle style, double d_max = 2.0);

/// Per-channel variant sharing one depth field.
std::array<TransmissionMap, 3> synth_transmission_rgb(std::size_t height, std::size_t width, std::uint64_t seed,
                                                      std::array<double, 3> beta, DepthStyle style,
                                                      double d_max = 2.0);

/// Default attenuation ranges for underwater synthesis (red attenuates fastest).
struct AttenuationRanges {
  std::array<double, 2> r{0.6, 2.0};
  std::array<double, 2> g{0.1, 0.6};
  std::array<double, 2> b{0.05, 0.4};
};

const char* to_string(DepthStyle style) noexcept;
DepthStyle depth_style_from_string(std::string_view name);

}  // namespace mtur::physics
