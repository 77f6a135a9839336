#include <algorithm>
#include <cmath>

#include "mtur/error.hpp"
#include "mtur/metrics.hpp"

namespace mtur::metrics {
namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double variance_about(const std::vector<double>& v, double mu) {
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Alpha-trimmed mean: drops ceil(alpha K) smallest and floor(alpha K) largest.
double trimmed_mean(std::vector<double> v, double alpha) {
  std::sort(v.begin(), v.end());
  const double k = static_cast<double>(v.size());
  const auto lo = static_cast<std::size_t>(std::ceil(alpha * k));
  const auto hi = static_cast<std::size_t>(std::floor(alpha * k));
  if (lo + hi >= v.size()) return mean_of(v);
  double s = 0;
  for (std::size_t i = lo; i < v.size() - hi; ++i) s += v[i];
  return s / static_cast<double>(v.size() - lo - hi);
}

std::vector<double> channel(const ImageRGB& img, std::size_t c) {
  std::vector<double> out(img.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = img.pixels()[3 * i + c];
  return out;
}

}  // namespace

UciqeTerms uciqe_terms(const ImageRGB& img, const UnderwaterConstants& k) {
  const std::size_t n = img.pixel_count();
  if (n == 0) throw DimensionError("uciqe: empty image");
  const auto lab = rgb_to_lab(img);
  const auto hsv = rgb_to_hsv(img);
  std::vector<double> chroma(n), lightness(n);
  double sat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    chroma[i] = std::hypot(lab[3 * i + 1], lab[3 * i + 2]) / 100.0;
    lightness[i] = lab[3 * i] / 100.0;
    sat += hsv[3 * i + 1];
  }
  UciqeTerms t;
  t.sigma_chroma = std::sqrt(variance_about(chroma, mean_of(chroma)));

  std::sort(lightness.begin(), lightness.end());
  const std::size_t tail =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(k.uciqe_tail * static_cast<double>(n))));
  double low = 0, high = 0;
  for (std::size_t i = 0; i < tail; ++i) {
    low += lightness[i];
    high += lightness[n - 1 - i];
  }
  t.contrast = (high - low) / static_cast<double>(tail);
  t.mean_saturation = sat / static_cast<double>(n);
  t.score = k.uciqe_chroma * t.sigma_chroma + k.uciqe_contrast * t.contrast + k.uciqe_saturation * t.mean_saturation;
  return t;
}

double uciqe(const ImageRGB& img, const UnderwaterConstants& k) { return uciqe_terms(img, k).score; }

double uicm(const ImageRGB& img, const UnderwaterConstants& k) {
  const std::size_t n = img.pixel_count();
  if (n == 0) throw DimensionError("uicm: empty image");
  std::vector<double> rg(n), yb(n);
  const auto& px = img.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = 255.0 * px[3 * i], g = 255.0 * px[3 * i + 1], b = 255.0 * px[3 * i + 2];
    rg[i] = r - g;
    yb[i] = (r + g) / 2.0 - b;
  }
  const double mu_rg = trimmed_mean(rg, k.uicm_trim), mu_yb = trimmed_mean(yb, k.uicm_trim);
  const double var_rg = variance_about(rg, mu_rg), var_yb = variance_about(yb, mu_yb);
  return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);
}

std::vector<double> sobel_magnitude(const std::vector<double>& plane, std::size_t height, std::size_t width) {
  std::vector<double> out(height * width);
  auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(height) - 1);
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(width) - 1);
    return plane[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
  };
  for (std::size_t yy = 0; yy < height; ++yy) {
    for (std::size_t xx = 0; xx < width; ++xx) {
      const auto y = static_cast<std::ptrdiff_t>(yy), x = static_cast<std::ptrdiff_t>(xx);
      const double gx = (at(y - 1, x + 1) + 2 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2 * at(y - 1, x) + at(y - 1, x + 1));
      out[yy * width + xx] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

double eme(const std::vector<double>& plane, std::size_t height, std::size_t width, std::size_t block) {
  if (block == 0) throw ConfigError("eme: block size must be >= 1");
  const std::size_t k1 = height / block, k2 = width / block;
  if (k1 == 0 || k2 == 0) return 0.0;
  double total = 0;
  for (std::size_t by = 0; by < k1; ++by) {
    for (std::size_t bx = 0; bx < k2; ++bx) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t y = by * block; y < (by + 1) * block; ++y) {
        for (std::size_t x = bx * block; x < (bx + 1) * block; ++x) {
          lo = std::min(lo, plane[y * width + x]);
          hi = std::max(hi, plane[y * width + x]);
        }
      }
      if (lo > 0 && hi > 0) total += std::log(hi / lo);
    }
  }
  return 2.0 * total / static_cast<double>(k1 * k2);
}

double uism(const ImageRGB& img, const UnderwaterConstants& k) {
  const std::size_t h = img.height(), w = img.width();
  double total = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    const auto plane = channel(img, c);
    auto edges = sobel_magnitude(plane, h, w);
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i] *= plane[i];
    total += k.uism_channel_weights[c] * eme(edges, h, w, k.block);
  }
  return total;
}

double uiconm(const ImageRGB& img, const UnderwaterConstants& k) {
  if (k.block == 0) throw ConfigError("uiconm: block size must be >= 1");
  const auto y = luma(img);
  const std::size_t h = y.height(), w = y.width(), b = k.block;
  const std::size_t k1 = h / b, k2 = w / b;
  if (k1 == 0 || k2 == 0) return 0.0;
  double total = 0;
  for (std::size_t by = 0; by < k1; ++by) {
    for (std::size_t bx = 0; bx < k2; ++bx) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t yy = by * b; yy < (by + 1) * b; ++yy) {
        for (std::size_t xx = bx * b; xx < (bx + 1) * b; ++xx) {
          lo = std::min(lo, y.at(yy, xx));
          hi = std::max(hi, y.at(yy, xx));
        }
      }
      if (hi + lo > 0 && hi > lo) {
        const double r = (hi - lo) / (hi + lo);
        total += r * std::log(r);
      }
    }
  }
  return -total / static_cast<double>(k1 * k2);
}

UiqmTerms uiqm_terms(const ImageRGB& img, const UnderwaterConstants& k) {
  UiqmTerms t;
  t.uicm = uicm(img, k);
  t.uism = uism(img, k);
  t.uiconm = uiconm(img, k);
  t.score = k.uiqm_uicm * t.uicm + k.uiqm_uism * t.uism + k.uiqm_uiconm * t.uiconm;
  return t;
}

double uiqm(const ImageRGB& img, const UnderwaterConstants& k) { return uiqm_terms(img, k).score; }

}  // namespace mtur::metrics
