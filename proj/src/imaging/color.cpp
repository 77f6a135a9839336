#include <algorithm>
#include <cmath>

#include "mtur/image.hpp"

namespace mtur {
namespace {

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

// D65 reference white.
constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

}  // namespace

std::array<double, 3> rgb_to_lab(double r, double g, double b) noexcept {
  const double lr = srgb_to_linear(r), lg = srgb_to_linear(g), lb = srgb_to_linear(b);
  const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
  const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
  const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  // 116 * (4 / 29) - 16 rounds to -2e-16 for black.
  return {std::max(0.0, 116.0 * fy - 16.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::vector<double> rgb_to_lab(const ImageRGB& img) {
  std::vector<double> out(img.pixels().size());
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto lab = rgb_to_lab(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    std::copy(lab.begin(), lab.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) noexcept {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  double h = 0.0;
  if (d > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / d, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / d + 2.0);
    } else {
      h = 60.0 * ((r - g) / d + 4.0);
    }
    if (h < 0.0) h += 360.0;
  }
  const double s = mx > 0.0 ? d / mx : 0.0;
  return {h, s, mx};
}

std::vector<double> rgb_to_hsv(const ImageRGB& img) {
  std::vector<double> out(img.pixels().size());
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto hsv = rgb_to_hsv(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    std::copy(hsv.begin(), hsv.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

ImageGray luma(const ImageRGB& img) {
  std::vector<double> v(img.pixel_count());
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  return ImageGray(img.height(), img.width(), std::move(v));
}

}  // namespace mtur
