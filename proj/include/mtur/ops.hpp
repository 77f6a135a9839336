#pragma once

#include <cstddef>

#include "mtur/autograd.hpp"

namespace mtur {

enum class PaddingMode { reflect, zeros };

/// Convolution options. Padding is always "same" for stride 1:
/// pad = dilation * (kernel - 1) / 2 on each side, so the output extent is
/// floor((in - 1) / stride) + 1.
struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  PaddingMode padding = PaddingMode::reflect;
};

/// Output extent of a convolution along one axis.
std::size_t conv_output_size(std::size_t in, std::size_t stride);

/// Mirror index (no edge repeat) for any integer offset; valid for n >= 1.
std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) noexcept;

/// input NCHW, weight OIHW (odd kernel), bias O or empty Var.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& opt = {});

template <typename T>
Var<T> group_norm(const Var<T>& input, std::size_t groups, const Var<T>& gamma, const Var<T>& beta,
                  double eps = 1e-5);

enum class Activation { selu, relu, sigmoid };

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

template <typename T>
Var<T> activation(const Var<T>& input, Activation kind);

enum class Elementwise { add, mul };

/// `b` either matches `a` exactly or is an N1HW map broadcast over the
/// channels of an NCHW `a`. No other broadcasting is supported.
template <typename T>
Var<T> elementwise(const Var<T>& a, const Var<T>& b, Elementwise kind);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return elementwise(a, b, Elementwise::add);
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return elementwise(a, b, Elementwise::mul);
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor);

/// Stacks channels of `a` then `b`; N, H, W must agree.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> slice_channels(const Var<T>& a, std::size_t begin, std::size_t count);

enum class ResampleMode { nearest, bilinear };

/// Half-pixel (align_corners = false) resampling of an NCHW tensor.
template <typename T>
Var<T> resample(const Var<T>& input, std::size_t out_h, std::size_t out_w, ResampleMode mode);

template <typename T>
Var<T> sum(const Var<T>& a);

template <typename T>
Var<T> mean_abs_error(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mean_squared_error(const Var<T>& a, const Var<T>& b);

}  // namespace mtur
