#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mtur/error.hpp"
#include "mtur/physics.hpp"

namespace mtur::physics {

void Airlight::validate() const {
  for (double v : {r, g, b}) {
    if (!(v > 0.0 && v <= 1.0)) {
      throw ConfigError("airlight channels must lie in (0, 1], got (" + std::to_string(r) + ", " + std::to_string(g) +
                        ", " + std::to_string(b) + ")");
    }
  }
}

void PhysicsParams::validate() const {
  if (patch_radius < 1) throw ConfigError("patch_radius must be >= 1");
  if (!(airlight_quantile > 0.0 && airlight_quantile <= 0.05)) {
    throw ConfigError("airlight_quantile must lie in (0, 0.05]");
  }
  if (!(t0 > 0.0 && t0 < 1.0)) throw ConfigError("t0 must lie in (0, 1)");
}

namespace {

// Running minimum over [i - r, i + r] clipped to the signal, which equals the
// minimum over an edge-replicated window. Monotone deque of indices.
void min_1d(const double* src, std::size_t n, std::size_t stride, std::size_t r, double* dst,
            std::vector<std::size_t>& dq) {
  dq.clear();
  std::size_t head = 0;
  std::size_t next = 0;  // next source index to enqueue
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hi = std::min(n - 1, i + r);
    for (; next <= hi; ++next) {
      const double v = src[next * stride];
      while (dq.size() > head && src[dq.back() * stride] >= v) dq.pop_back();
      dq.push_back(next);
    }
    const std::size_t lo = i >= r ? i - r : 0;
    while (dq[head] < lo) ++head;
    dst[i * stride] = src[dq[head] * stride];
  }
}

}  // namespace

ImageGray min_filter(const ImageGray& src, std::size_t radius) {
  const std::size_t h = src.height(), w = src.width();
  if (radius == 0 || h == 0 || w == 0) return src;
  std::vector<double> tmp(h * w), out(h * w);
  std::vector<std::size_t> dq;
  dq.reserve(std::max(h, w));
  for (std::size_t y = 0; y < h; ++y) min_1d(src.values().data() + y * w, w, 1, radius, tmp.data() + y * w, dq);
  for (std::size_t x = 0; x < w; ++x) min_1d(tmp.data() + x, h, w, radius, out.data() + x, dq);
  return ImageGray(h, w, std::move(out));
}

ImageGray dark_channel(const ImageRGB& img, const Airlight& airlight, std::size_t patch_radius) {
  airlight.validate();
  std::vector<double> ratio(img.pixel_count());
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    ratio[i] = std::min({px[3 * i] / airlight.r, px[3 * i + 1] / airlight.g, px[3 * i + 2] / airlight.b});
  }
  // The ImageGray constructor clamps ratios above 1 before the patch minimum,
  // which commutes with the minimum.
  return min_filter(ImageGray(img.height(), img.width(), std::move(ratio)), patch_radius);
}

Airlight estimate_airlight(const ImageRGB& img, const PhysicsParams& params) {
  params.validate();
  const std::size_t n = img.pixel_count();
  if (n == 0) throw DimensionError("estimate_airlight: empty image");
  const auto dark = dark_channel(img, Airlight{}, params.patch_radius);
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(params.airlight_quantile * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& dv = dark.values();
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return dv[a] != dv[b] ? dv[a] > dv[b] : a < b; });
  std::array<double, 3> acc{0, 0, 0};
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t c = 0; c < 3; ++c) acc[c] += img.pixels()[3 * idx[k] + c];
  }
  auto finish = [&](double s) { return std::clamp(s / static_cast<double>(count), kAirlightFloor, 1.0); };
  return Airlight{finish(acc[0]), finish(acc[1]), finish(acc[2])};
}

TransmissionMap estimate_mt(const ImageRGB& img, const Airlight& airlight, std::size_t patch_radius) {
  auto dark = dark_channel(img, airlight, patch_radius);
  for (auto& v : dark.values()) v = 1.0 - v;
  dark.clamp();
  return TransmissionMap{std::move(dark), MapRole::estimated};
}

}  // namespace mtur::physics
