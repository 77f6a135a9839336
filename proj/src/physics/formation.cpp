#include <algorithm>
#include <string>

#include "mtur/error.hpp"
#include "mtur/physics.hpp"

namespace mtur::physics {
namespace {

void require_same_size(const ImageRGB& img, const TransmissionMap& t, const char* op) {
  if (img.height() != t.height() || img.width() != t.width()) {
    throw DimensionError(std::string(op) + ": image is " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()) + " but transmission is " + std::to_string(t.height()) + "x" +
                         std::to_string(t.width()));
  }
}

}  // namespace

ImageRGB degrade(const ImageRGB& clean, const TransmissionMap& t, const Airlight& airlight) {
  return degrade(clean, {t, t, t}, airlight);
}

ImageRGB degrade(const ImageRGB& clean, const std::array<TransmissionMap, 3>& t, const Airlight& airlight) {
  airlight.validate();
  for (const auto& m : t) require_same_size(clean, m, "degrade");
  ImageRGB out(clean.height(), clean.width());
  for (std::size_t i = 0; i < clean.pixel_count(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double tc = t[c].values.values()[i];
      out.pixels()[3 * i + c] = clean.pixels()[3 * i + c] * tc + airlight[c] * (1.0 - tc);
    }
  }
  out.clamp();
  return out;
}

ImageRGB invert_restore(const ImageRGB& img, const TransmissionMap& t, const Airlight& airlight, double t0) {
  airlight.validate();
  if (!(t0 > 0.0 && t0 < 1.0)) throw ConfigError("invert_restore: t0 must lie in (0, 1)");
  require_same_size(img, t, "invert_restore");
  ImageRGB out(img.height(), img.width());
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const double tv = t.values.values()[i];
    const double div = std::max(tv, t0);
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels()[3 * i + c] = (img.pixels()[3 * i + c] - airlight[c] * (1.0 - tv)) / div;
    }
  }
  out.clamp();
  return out;
}

}  // namespace mtur::physics
