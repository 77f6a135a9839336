#include <algorithm>
#include <cmath>
#include <tuple>

#include "mtur/error.hpp"
#include "mtur/image.hpp"

namespace mtur {

namespace {
double clamp01(double v) { return std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0); }
}  // namespace

ImageRGB::ImageRGB(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), pixels_(height * width * 3, clamp01(fill)) {}

ImageRGB::ImageRGB(std::size_t height, std::size_t width, std::array<double, 3> color)
    : height_(height), width_(width), pixels_(height * width * 3) {
  for (std::size_t i = 0; i < height * width; ++i) {
    for (std::size_t c = 0; c < 3; ++c) pixels_[i * 3 + c] = clamp01(color[c]);
  }
}

ImageRGB::ImageRGB(std::size_t height, std::size_t width, std::vector<double> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != height * width * 3) {
    throw DimensionError("ImageRGB: " + std::to_string(pixels_.size()) + " values for " + std::to_string(height) +
                         "x" + std::to_string(width) + "x3");
  }
  clamp();
}

void ImageRGB::clamp() {
  for (auto& v : pixels_) v = clamp01(v);
}

ImageGray::ImageGray(std::size_t height, std::size_t width, double fill)
    : height_(height), width_(width), values_(height * width, clamp01(fill)) {}

ImageGray::ImageGray(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height * width) {
    throw DimensionError("ImageGray: " + std::to_string(values_.size()) + " values for " + std::to_string(height) +
                         "x" + std::to_string(width));
  }
  clamp();
}

void ImageGray::clamp() {
  for (auto& v : values_) v = clamp01(v);
}

template <typename T>
void write_into_batch(const ImageRGB& img, Tensor<T>& batch, std::size_t n) {
  require_nchw(batch, "image batch");
  if (batch.dim(1) != 3 || batch.dim(2) != img.height() || batch.dim(3) != img.width() || n >= batch.dim(0)) {
    throw DimensionError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                         " does not fit batch " + shape_string(batch.shape()));
  }
  const std::size_t hw = img.pixel_count();
  T* dst = batch.raw() + n * 3 * hw;
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) dst[c * hw + i] = static_cast<T>(img.pixels()[i * 3 + c]);
  }
}

template <typename T>
void write_into_batch(const ImageGray& img, Tensor<T>& batch, std::size_t n) {
  require_nchw(batch, "map batch");
  if (batch.dim(1) != 1 || batch.dim(2) != img.height() || batch.dim(3) != img.width() || n >= batch.dim(0)) {
    throw DimensionError("map " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                         " does not fit batch " + shape_string(batch.shape()));
  }
  const std::size_t hw = img.height() * img.width();
  std::transform(img.values().begin(), img.values().end(), batch.raw() + n * hw,
                 [](double v) { return static_cast<T>(v); });
}

template <typename T>
Tensor<T> to_tensor(const ImageRGB& img) {
  Tensor<T> t(Shape{1, 3, img.height(), img.width()});
  write_into_batch(img, t, 0);
  return t;
}

template <typename T>
Tensor<T> to_tensor(const ImageGray& img) {
  Tensor<T> t(Shape{1, 1, img.height(), img.width()});
  write_into_batch(img, t, 0);
  return t;
}

template <typename T>
ImageRGB rgb_from_tensor(const Tensor<T>& t, std::size_t n) {
  require_nchw(t, "rgb_from_tensor");
  if (t.dim(1) != 3 || n >= t.dim(0)) throw DimensionError("rgb_from_tensor: shape " + shape_string(t.shape()));
  const std::size_t h = t.dim(2), w = t.dim(3), hw = h * w;
  std::vector<double> px(hw * 3);
  const T* src = t.raw() + n * 3 * hw;
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) px[i * 3 + c] = static_cast<double>(src[c * hw + i]);
  }
  return ImageRGB(h, w, std::move(px));
}

template <typename T>
ImageGray gray_from_tensor(const Tensor<T>& t, std::size_t n) {
  require_nchw(t, "gray_from_tensor");
  if (t.dim(1) != 1 || n >= t.dim(0)) throw DimensionError("gray_from_tensor: shape " + shape_string(t.shape()));
  const std::size_t hw = t.dim(2) * t.dim(3);
  std::vector<double> v(t.raw() + n * hw, t.raw() + (n + 1) * hw);
  return ImageGray(t.dim(2), t.dim(3), std::move(v));
}

template Tensor<float> to_tensor(const ImageRGB&);
template Tensor<double> to_tensor(const ImageRGB&);
template Tensor<float> to_tensor(const ImageGray&);
template Tensor<double> to_tensor(const ImageGray&);
template void write_into_batch(const ImageRGB&, Tensor<float>&, std::size_t);
template void write_into_batch(const ImageRGB&, Tensor<double>&, std::size_t);
template void write_into_batch(const ImageGray&, Tensor<float>&, std::size_t);
template void write_into_batch(const ImageGray&, Tensor<double>&, std::size_t);
template ImageRGB rgb_from_tensor(const Tensor<float>&, std::size_t);
template ImageRGB rgb_from_tensor(const Tensor<double>&, std::size_t);
template ImageGray gray_from_tensor(const Tensor<float>&, std::size_t);
template ImageGray gray_from_tensor(const Tensor<double>&, std::size_t);

ImageRGB resize(const ImageRGB& img, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || img.pixel_count() == 0) throw DimensionError("resize: empty extent");
  if (height == img.height() && width == img.width()) return img;
  auto taps = [](std::size_t in, std::size_t out, std::size_t o) {
    double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    src = std::max(src, 0.0);
    const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
    const auto hi = std::min(lo + 1, in - 1);
    return std::tuple{lo, hi, src - static_cast<double>(lo)};
  };
  ImageRGB out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const auto [y0, y1, fy] = taps(img.height(), height, y);
    for (std::size_t x = 0; x < width; ++x) {
      const auto [x0, x1, fx] = taps(img.width(), width, x);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = (1 - fx) * img.at(y0, x0, c) + fx * img.at(y0, x1, c);
        const double bot = (1 - fx) * img.at(y1, x0, c) + fx * img.at(y1, x1, c);
        out.at(y, x, c) = (1 - fy) * top + fy * bot;
      }
    }
  }
  out.clamp();
  return out;
}

ImageRGB crop(const ImageRGB& img, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width) {
  if (y0 + height > img.height() || x0 + width > img.width()) throw DimensionError("crop: window outside image");
  ImageRGB out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    }
  }
  return out;
}

ImageRGB flip_horizontal(const ImageRGB& img) {
  ImageRGB out(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width() - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

ImageRGB flip_vertical(const ImageRGB& img) {
  ImageRGB out(img.height(), img.width());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(img.height() - 1 - y, x, c) = img.at(y, x, c);
    }
  }
  return out;
}

}  // namespace mtur
