#include <cmath>
#include <string>

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"

namespace mtur::metrics {
namespace {

void require_same_size(const ImageRGB& a, const ImageRGB& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError(std::string(what) + ": images are " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " and " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
  }
}

// Valid-mode separable filtering: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size(), oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) s += taps[i] * src[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (std::size_t i = 0; i < k; ++i) s += taps[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const ImageRGB& a, const ImageRGB& b) {
  require_same_size(a, b, "psnr");
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  if (pa.empty()) throw DimensionError("psnr: empty images");
  double se = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = pa[i] - pb[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pa.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0;
  for (std::size_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - c;
    taps[i] = std::exp(-x * x / (2 * sigma * sigma));
    total += taps[i];
  }
  for (auto& t : taps) t /= total;
  return taps;
}

double ssim(const ImageRGB& a, const ImageRGB& b, const SsimParams& p) {
  require_same_size(a, b, "ssim");
  if (p.window < 1 || !(p.sigma > 0)) throw ConfigError("ssim: window must be >= 1 and sigma > 0");
  const std::size_t h = a.height(), w = a.width();
  if (h < p.window || w < p.window) {
    throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " is smaller than the " +
                         std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  }
  const auto la = luma(a).values();
  const auto lb = luma(b).values();
  std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }
  const auto taps = gaussian_window(p.window, p.sigma);
  const auto mu_a = filter_valid(la, h, w, taps);
  const auto mu_b = filter_valid(lb, h, w, taps);
  const auto e_aa = filter_valid(aa, h, w, taps);
  const auto e_bb = filter_valid(bb, h, w, taps);
  const auto e_ab = filter_valid(ab, h, w, taps);

  const double c1 = std::pow(p.k1 * p.dynamic_range, 2), c2 = std::pow(p.k2 * p.dynamic_range, 2);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

}  // namespace mtur::metrics
