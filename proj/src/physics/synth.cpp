#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mtur/error.hpp"
#include "mtur/physics.hpp"
#include "mtur/rng.hpp"

namespace mtur::physics {
namespace {

// Classic 2D gradient noise on a seeded permutation lattice.
class GradientNoise {
 public:
  explicit GradientNoise(Rng& rng) {
    std::iota(perm_.begin(), perm_.begin() + 256, 0);
    for (int i = 255; i > 0; --i) {
      const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
      std::swap(perm_[i], perm_[j]);
    }
    std::copy_n(perm_.begin(), 256, perm_.begin() + 256);
  }

  double operator()(double x, double y) const {
    const int xi = static_cast<int>(std::floor(x)), yi = static_cast<int>(std::floor(y));
    const double xf = x - xi, yf = y - yi;
    const int X = xi & 255, Y = yi & 255;
    const double u = fade(xf), v = fade(yf);
    const double n00 = grad(perm_[perm_[X] + Y], xf, yf);
    const double n10 = grad(perm_[perm_[X + 1] + Y], xf - 1, yf);
    const double n01 = grad(perm_[perm_[X] + Y + 1], xf, yf - 1);
    const double n11 = grad(perm_[perm_[X + 1] + Y + 1], xf - 1, yf - 1);
    const double a = n00 + u * (n10 - n00);
    const double b = n01 + u * (n11 - n01);
    return a + v * (b - a);
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
  static double grad(int h, double x, double y) {
    switch (h & 7) {
      case 0: return x + y;
      case 1: return -x + y;
      case 2: return x - y;
      case 3: return -x - y;
      case 4: return x;
      case 5: return -x;
      case 6: return y;
      default: return -y;
    }
  }
  std::array<int, 512> perm_{};
};

}  // namespace

const char* to_string(DepthStyle style) noexcept {
  switch (style) {
    case DepthStyle::constant: return "constant";
    case DepthStyle::linear_ramp: return "linear_ramp";
    case DepthStyle::perlin: return "perlin";
  }
  return "?";
}

DepthStyle depth_style_from_string(std::string_view name) {
  if (name == "constant") return DepthStyle::constant;
  if (name == "linear_ramp" || name == "ramp") return DepthStyle::linear_ramp;
  if (name == "perlin") return DepthStyle::perlin;
  throw ConfigError("unknown depth style '" + std::string(name) + "' (expected constant, linear_ramp or perlin)");
}

DepthField synth_depth(std::size_t height, std::size_t width, std::uint64_t seed, DepthStyle style, double d_max) {
  if (!(d_max >= 0.0) || !std::isfinite(d_max)) throw ConfigError("synth_depth: d_max must be finite and >= 0");
  // Normalized to [0, 1] first, scaled by d_max at the end.
  std::vector<double> d(height * width, 1.0);
  Rng rng(seed);
  if (style == DepthStyle::linear_ramp) {
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const double cx = std::cos(angle), cy = std::sin(angle);
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double v = cx * static_cast<double>(x) + cy * static_cast<double>(y);
        d[y * width + x] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (auto& v : d) v = hi > lo ? (v - lo) / (hi - lo) : 1.0;
  } else if (style == DepthStyle::perlin) {
    GradientNoise noise(rng);
    const double ox = rng.uniform(0, 256), oy = rng.uniform(0, 256);
    const double base = 3.0 / static_cast<double>(std::max<std::size_t>({height, width, 1}));
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double v = 0, amp = 1, freq = base;
        for (int octave = 0; octave < 4; ++octave) {
          v += amp * noise(ox + static_cast<double>(x) * freq, oy + static_cast<double>(y) * freq);
          amp *= 0.5;
          freq *= 2.0;
        }
        d[y * width + x] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (auto& v : d) v = hi > lo ? (v - lo) / (hi - lo) : 1.0;
  }
  for (auto& v : d) v *= d_max;
  return DepthField{height, width, std::move(d)};
}

TransmissionMap transmission_from_depth(const DepthField& depth, double beta) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("attenuation beta must be finite and >= 0");
  ImageGray t(depth.height, depth.width);
  for (std::size_t i = 0; i < t.values().size(); ++i) t.values()[i] = std::exp(-beta * depth.values[i]);
  return TransmissionMap{std::move(t), MapRole::true_t};
}

TransmissionMap synth_transmission(std::size_t height, std::size_t width, std::uint64_t seed, double beta,
                                   DepthStyle style, double d_max) {
  return transmission_from_depth(synth_depth(height, width, seed, style, d_max), beta);
}

std::array<TransmissionMap, 3> synth_transmission_rgb(std::size_t height, std::size_t width, std::uint64_t seed,
                                                      std::array<double, 3> beta, DepthStyle style, double d_max) {
  const auto depth = synth_depth(height, width, seed, style, d_max);
  return {transmission_from_depth(depth, beta[0]), transmission_from_depth(depth, beta[1]),
          transmission_from_depth(depth, beta[2])};
}

}  // namespace mtur::physics
