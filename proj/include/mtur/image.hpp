#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "mtur/tensor.hpp"

namespace mtur {

/// H x W x 3 image, interleaved (r, g, b), values in [0, 1].
class ImageRGB {
 public:
  ImageRGB() = default;
  ImageRGB(std::size_t height, std::size_t width, double fill = 0.0);
  ImageRGB(std::size_t height, std::size_t width, std::array<double, 3> color);
  /// Takes ownership of interleaved data and clamps it to [0, 1].
  ImageRGB(std::size_t height, std::size_t width, std::vector<double> pixels);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return height_ * width_; }

  double& at(std::size_t y, std::size_t x, std::size_t c) noexcept { return pixels_[(y * width_ + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const noexcept { return pixels_[(y * width_ + x) * 3 + c]; }

  std::vector<double>& pixels() noexcept { return pixels_; }
  const std::vector<double>& pixels() const noexcept { return pixels_; }

  void clamp();

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<double> pixels_;
};

/// H x W single-channel image in [0, 1].
class ImageGray {
 public:
  ImageGray() = default;
  ImageGray(std::size_t height, std::size_t width, double fill = 0.0);
  ImageGray(std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }

  double& at(std::size_t y, std::size_t x) noexcept { return values_[y * width_ + x]; }
  double at(std::size_t y, std::size_t x) const noexcept { return values_[y * width_ + x]; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  void clamp();

  friend bool operator==(const ImageGray&, const ImageGray&) = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<double> values_;
};

// Tensor bridges. Images become 1x3xHxW / 1x1xHxW planes.
template <typename T>
Tensor<T> to_tensor(const ImageRGB& img);
template <typename T>
Tensor<T> to_tensor(const ImageGray& img);

/// Writes `img` into sample `n` of an Nx3xHxW batch tensor.
template <typename T>
void write_into_batch(const ImageRGB& img, Tensor<T>& batch, std::size_t n);
template <typename T>
void write_into_batch(const ImageGray& img, Tensor<T>& batch, std::size_t n);

/// Sample `n` of an NCHW tensor with 3 (resp. 1) channels; values clamped.
template <typename T>
ImageRGB rgb_from_tensor(const Tensor<T>& t, std::size_t n = 0);
template <typename T>
ImageGray gray_from_tensor(const Tensor<T>& t, std::size_t n = 0);

/// Bilinear (half-pixel) resize.
ImageRGB resize(const ImageRGB& img, std::size_t height, std::size_t width);
ImageRGB crop(const ImageRGB& img, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width);
ImageRGB flip_horizontal(const ImageRGB& img);
ImageRGB flip_vertical(const ImageRGB& img);

// ------------------------------------------------------------------ file I/O
//
// Formats are chosen by extension: .png (8/16-bit, gray/gray+alpha/RGB/RGBA),
// .ppm/.pgm (binary P5/P6), .mttb (lossless f32 tensor named "image",
// shape HxWx3 or HxWx1). Saving PNG/PPM quantizes to 8 bits with
// round-half-up: byte = floor(v * 255 + 0.5).

ImageRGB load_image(const std::filesystem::path& path);
ImageGray load_gray(const std::filesystem::path& path);
void save_image(const ImageRGB& img, const std::filesystem::path& path);
void save_image(const ImageGray& img, const std::filesystem::path& path);

std::uint8_t quantize8(double v) noexcept;

// ------------------------------------------------------------------ color

/// sRGB (D65) -> CIE L*a*b*. Output interleaved (L, a, b), L in [0, 100].
std::vector<double> rgb_to_lab(const ImageRGB& img);
std::array<double, 3> rgb_to_lab(double r, double g, double b) noexcept;

/// Hexcone HSV. Output interleaved (H, S, V) with H in degrees [0, 360),
/// S and V in [0, 1]. Achromatic pixels have H = 0.
std::vector<double> rgb_to_hsv(const ImageRGB& img);
std::array<double, 3> rgb_to_hsv(double r, double g, double b) noexcept;

/// BT.601 luma 0.299 R + 0.587 G + 0.114 B.
ImageGray luma(const ImageRGB& img);

}  // namespace mtur
