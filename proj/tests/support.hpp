#pragma once

// Shared helpers for the test binaries: random data, brute-force oracles and
// a central-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mtur/image.hpp"
#include "mtur/ops.hpp"
#include "mtur/rng.hpp"

namespace mtur::testing {

inline Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline ImageRGB random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> px(h * w * 3);
  for (auto& v : px) v = rng.uniform();
  return ImageRGB(h, w, std::move(px));
}

/// Smooth-ish random image: a coloured gradient plus mild noise, so block
/// statistics are not degenerate.
inline ImageRGB textured_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  const double a = rng.uniform(0.1, 0.9), b = rng.uniform(-0.4, 0.4), c = rng.uniform(-0.4, 0.4);
  std::vector<double> px(h * w * 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double base = a + b * static_cast<double>(y) / static_cast<double>(h) +
                            c * static_cast<double>(x) / static_cast<double>(w) * (ch == 1 ? -1.0 : 1.0);
        px[(y * w + x) * 3 + ch] = std::clamp(base + rng.uniform(-0.15, 0.15), 0.0, 1.0);
      }
    }
  }
  return ImageRGB(h, w, std::move(px));
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ------------------------------------------------------------ gradient check

/// Relative error with a floor on the denominator so that gradients that are
/// zero up to rounding do not produce spurious failures.
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every entry of every
/// leaf (or `max_entries` evenly spread entries per leaf when non-zero).
/// `loss` must rebuild the graph from the current leaf values on each call.
inline GradCheckResult grad_check(std::vector<Var<double>> leaves, const std::function<Var<double>()>& loss,
                                  double h = 1e-4, std::size_t max_entries = 0) {
  GradCheckResult r;
  const auto grads = backward(loss());
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const Tensor<double>* g = grads.find(leaves[l]);
    auto& value = leaves[l].mutable_leaf_value();
    const std::size_t n = value.numel();
    const std::size_t count = max_entries ? std::min(n, max_entries) : n;
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = count == n ? k : (k * n) / count + (k * 7) % std::max<std::size_t>(1, n / count);
      const double orig = value[i];
      value[i] = orig + h;
      const double plus = loss().value().item();
      value[i] = orig - h;
      const double minus = loss().value().item();
      value[i] = orig;
      const double numeric = (plus - minus) / (2 * h);
      const double analytic = g ? (*g)[i] : 0.0;
      const double e = grad_rel_error(analytic, numeric);
      ++r.checked;
      if (e > r.worst) {
        r.worst = e;
        r.where = "leaf " + std::to_string(l) + " entry " + std::to_string(i) + " analytic " +
                  std::to_string(analytic) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return r;
}

/// Random fixed projection of an op output to a scalar, so every output
/// entry contributes with a distinct weight.
inline Var<double> project(const Var<double>& y, std::uint64_t seed) {
  return sum(mul(y, Var<double>::constant(random_tensor(y.shape(), seed))));
}

// ------------------------------------------------------------ tensor oracles

/// Direct nested-loop convolution with explicit padding handling.
inline Tensor<double> conv2d_reference(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* bias,
                                       std::size_t stride, std::size_t dilation, bool reflect) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), K = w.dim(2);
  const auto pad = static_cast<std::ptrdiff_t>(dilation * (K - 1) / 2);
  const std::size_t OH = (H - 1) / stride + 1, OW = (W - 1) / stride + 1;
  Tensor<double> y(Shape{N, O, OH, OW});
  auto mirror = [](std::ptrdiff_t i, std::ptrdiff_t n) {
    if (n == 1) return std::ptrdiff_t{0};
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t oy = 0; oy < OH; ++oy) {
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double s = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t ky = 0; ky < K; ++ky) {
              for (std::size_t kx = 0; kx < K; ++kx) {
                auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky * dilation) - pad;
                auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx * dilation) - pad;
                const auto h = static_cast<std::ptrdiff_t>(H), wd = static_cast<std::ptrdiff_t>(W);
                if (reflect) {
                  iy = mirror(iy, h);
                  ix = mirror(ix, wd);
                } else if (iy < 0 || iy >= h || ix < 0 || ix >= wd) {
                  continue;
                }
                s += w.at(o, c, ky, kx) * x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          y.at(n, o, oy, ox) = s;
        }
      }
    }
  }
  return y;
}

/// Two-pass GroupNorm with biased variance.
inline Tensor<double> group_norm_reference(const Tensor<double>& x, std::size_t groups, const Tensor<double>& gamma,
                                           const Tensor<double>& beta, double eps = 1e-5) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), cg = C / groups;
  Tensor<double> y(x.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      double mean = 0, var = 0;
      const double count = static_cast<double>(cg * H * W);
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) mean += x.at(n, c, i, j);
      mean /= count;
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) var += (x.at(n, c, i, j) - mean) * (x.at(n, c, i, j) - mean);
      var /= count;
      for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j)
            y.at(n, c, i, j) = (x.at(n, c, i, j) - mean) / std::sqrt(var + eps) * gamma[c] + beta[c];
    }
  }
  return y;
}

/// Half-pixel bilinear sample of one plane, written out pixel by pixel.
inline double bilinear_reference(const Tensor<double>& x, std::size_t n, std::size_t c, std::size_t oy, std::size_t ox,
                                 std::size_t OH, std::size_t OW) {
  const double H = static_cast<double>(x.dim(2)), W = static_cast<double>(x.dim(3));
  const double sy = std::clamp((static_cast<double>(oy) + 0.5) * H / static_cast<double>(OH) - 0.5, 0.0, H - 1);
  const double sx = std::clamp((static_cast<double>(ox) + 0.5) * W / static_cast<double>(OW) - 0.5, 0.0, W - 1);
  const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, x.dim(2) - 1), x1 = std::min(x0 + 1, x.dim(3) - 1);
  const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1)) +
         fy * ((1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1));
}

// ------------------------------------------------------------ image oracles

/// Patch minimum with edge replication, by brute force.
inline ImageGray min_filter_reference(const ImageGray& src, std::size_t r) {
  const auto h = static_cast<std::ptrdiff_t>(src.height()), w = static_cast<std::ptrdiff_t>(src.width());
  const auto rr = static_cast<std::ptrdiff_t>(r);
  ImageGray out(src.height(), src.width());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double m = INFINITY;
      for (std::ptrdiff_t dy = -rr; dy <= rr; ++dy) {
        for (std::ptrdiff_t dx = -rr; dx <= rr; ++dx) {
          const auto yy = std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1);
          const auto xx = std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1);
          m = std::min(m, src.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)));
        }
      }
      out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = m;
    }
  }
  return out;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("mtur_test_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mtur::testing
