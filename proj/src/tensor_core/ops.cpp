#include <algorithm>
#include <cmath>
#include <string>

#include "mtur/error.hpp"
#include "mtur/ops.hpp"

namespace mtur {

// ---------------------------------------------------------------- group_norm

template <typename T>
Var<T> group_norm(const Var<T>& input, std::size_t groups, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const auto& x = input.value();
  require_nchw(x, "group_norm input");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (groups == 0 || C % groups != 0) {
    throw ConfigError("group_norm: " + std::to_string(C) + " channels not divisible by " + std::to_string(groups) +
                      " groups");
  }
  if (gamma.value().numel() != C || beta.value().numel() != C) {
    throw DimensionError("group_norm: gamma/beta length must equal channel count " + std::to_string(C));
  }
  const std::size_t cpg = C / groups;
  const std::size_t M = cpg * HW;
  // Per (sample, group) mean and inverse std, saved for backward.
  auto stats = std::make_shared<std::vector<T>>(2 * N * groups);
  Tensor<T> out(x.shape());
  const T* g = gamma.value().raw();
  const T* b = beta.value().raw();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t gr = 0; gr < groups; ++gr) {
      const std::size_t base = (n * C + gr * cpg) * HW;
      const T* xs = x.raw() + base;
      double mean = 0;
      for (std::size_t i = 0; i < M; ++i) mean += xs[i];
      mean /= static_cast<double>(M);
      double var = 0;
      for (std::size_t i = 0; i < M; ++i) {
        const double d = xs[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(M);
      const double rstd = 1.0 / std::sqrt(var + eps);
      (*stats)[2 * (n * groups + gr)] = static_cast<T>(mean);
      (*stats)[2 * (n * groups + gr) + 1] = static_cast<T>(rstd);
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = gr * cpg + c;
        T* ys = out.raw() + base + c * HW;
        const T* xc = xs + c * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          ys[i] = static_cast<T>((xc[i] - mean) * rstd) * g[ch] + b[ch];
        }
      }
    }
  }
  return Var<T>::make(
      "group_norm", std::move(out), {input, gamma, beta},
      [stats, groups, cpg, HW, M](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
        const Tensor<T>& x = self.inputs[0]->value;
        const T* g = self.inputs[1]->value.raw();
        const std::size_t N = x.dim(0), C = x.dim(1);
        std::vector<T> xhat(M), dxhat(M);
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t gr = 0; gr < groups; ++gr) {
            const std::size_t base = (n * C + gr * cpg) * HW;
            const T mean = (*stats)[2 * (n * groups + gr)];
            const T rstd = (*stats)[2 * (n * groups + gr) + 1];
            double sum_d = 0, sum_dx = 0;
            for (std::size_t c = 0; c < cpg; ++c) {
              const std::size_t ch = gr * cpg + c;
              for (std::size_t i = 0; i < HW; ++i) {
                const std::size_t k = c * HW + i;
                const T dy = gout[base + k];
                xhat[k] = (x[base + k] - mean) * rstd;
                dxhat[k] = dy * g[ch];
                sum_d += dxhat[k];
                sum_dx += dxhat[k] * xhat[k];
                if (gin[1]) (*gin[1])[ch] += dy * xhat[k];
                if (gin[2]) (*gin[2])[ch] += dy;
              }
            }
            if (gin[0]) {
              const double inv_m = 1.0 / static_cast<double>(M);
              T* dx = gin[0]->raw() + base;
              for (std::size_t k = 0; k < M; ++k) {
                dx[k] += static_cast<T>(rstd * (dxhat[k] - inv_m * sum_d - xhat[k] * inv_m * sum_dx));
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------- activation

template <typename T>
Var<T> activation(const Var<T>& input, Activation kind) {
  const auto& x = input.value();
  Tensor<T> out(x.shape());
  const T lam = static_cast<T>(kSeluLambda), alpha = static_cast<T>(kSeluAlpha);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x[i];
    switch (kind) {
      case Activation::selu:
        out[i] = v > 0 ? lam * v : lam * alpha * std::expm1(v);
        break;
      case Activation::relu:
        out[i] = v > 0 ? v : T{0};
        break;
      case Activation::sigmoid:
        out[i] = v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
        break;
    }
  }
  const char* name = kind == Activation::selu ? "selu" : kind == Activation::relu ? "relu" : "sigmoid";
  return Var<T>::make(name, std::move(out), {input},
                      [kind, lam, alpha](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
                        if (!gin[0]) return;
                        const Tensor<T>& x = self.inputs[0]->value;
                        const Tensor<T>& y = self.value;
                        Tensor<T>& dx = *gin[0];
                        for (std::size_t i = 0; i < x.numel(); ++i) {
                          T d;
                          switch (kind) {
                            case Activation::selu:
                              d = x[i] > 0 ? lam : y[i] + lam * alpha;
                              break;
                            case Activation::relu:
                              d = x[i] > 0 ? T{1} : T{0};
                              break;
                            default:
                              d = y[i] * (T{1} - y[i]);
                              break;
                          }
                          dx[i] += d * gout[i];
                        }
                      });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> elementwise(const Var<T>& a, const Var<T>& b, Elementwise kind) {
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool same = av.shape() == bv.shape();
  const bool channel_map = !same && av.rank() == 4 && bv.rank() == 4 && bv.dim(1) == 1 && av.dim(0) == bv.dim(0) &&
                           av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3);
  if (!same && !channel_map) {
    throw DimensionError("elementwise: cannot broadcast " + shape_string(bv.shape()) + " onto " +
                         shape_string(av.shape()) + " (only equal shapes or an N1HW map are supported)");
  }
  Tensor<T> out(av.shape());
  // Index of b for flat index i of a.
  const std::size_t C = channel_map ? av.dim(1) : 1;
  const std::size_t HW = channel_map ? av.dim(2) * av.dim(3) : 1;
  auto bidx = [=](std::size_t i) { return channel_map ? (i / (C * HW)) * HW + i % HW : i; };
  for (std::size_t i = 0; i < av.numel(); ++i) {
    const T y = bv[bidx(i)];
    out[i] = kind == Elementwise::add ? av[i] + y : av[i] * y;
  }
  return Var<T>::make(kind == Elementwise::add ? "add" : "mul", std::move(out), {a, b},
                      [kind, bidx](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
                        const Tensor<T>& av = self.inputs[0]->value;
                        const Tensor<T>& bv = self.inputs[1]->value;
                        for (std::size_t i = 0; i < gout.numel(); ++i) {
                          const std::size_t j = bidx(i);
                          if (kind == Elementwise::add) {
                            if (gin[0]) (*gin[0])[i] += gout[i];
                            if (gin[1]) (*gin[1])[j] += gout[i];
                          } else {
                            if (gin[0]) (*gin[0])[i] += gout[i] * bv[j];
                            if (gin[1]) (*gin[1])[j] += gout[i] * av[i];
                          }
                        }
                      });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return Var<T>::make("scale", std::move(out), {a},
                      [factor](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
                        if (!gin[0]) return;
                        for (std::size_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i] * factor;
                      });
}

// ---------------------------------------------------------------- channels

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  require_nchw(av, "concat_channels lhs");
  require_nchw(bv, "concat_channels rhs");
  for (std::size_t axis : {0u, 2u, 3u}) {
    if (av.dim(axis) != bv.dim(axis)) {
      throw DimensionError("concat_channels: axis " + std::to_string(axis) + " differs (" + shape_string(av.shape()) +
                           " vs " + shape_string(bv.shape()) + ")");
    }
  }
  const std::size_t N = av.dim(0), C1 = av.dim(1), C2 = bv.dim(1), HW = av.dim(2) * av.dim(3);
  Tensor<T> out(Shape{N, C1 + C2, av.dim(2), av.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(av.raw() + n * C1 * HW, C1 * HW, out.raw() + n * (C1 + C2) * HW);
    std::copy_n(bv.raw() + n * C2 * HW, C2 * HW, out.raw() + (n * (C1 + C2) + C1) * HW);
  }
  return Var<T>::make("concat_channels", std::move(out), {a, b},
                      [N, C1, C2, HW](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
                        for (std::size_t n = 0; n < N; ++n) {
                          const T* g = gout.raw() + n * (C1 + C2) * HW;
                          if (gin[0]) {
                            T* d = gin[0]->raw() + n * C1 * HW;
                            for (std::size_t i = 0; i < C1 * HW; ++i) d[i] += g[i];
                          }
                          if (gin[1]) {
                            T* d = gin[1]->raw() + n * C2 * HW;
                            for (std::size_t i = 0; i < C2 * HW; ++i) d[i] += g[C1 * HW + i];
                          }
                        }
                      });
}

template <typename T>
Var<T> slice_channels(const Var<T>& a, std::size_t begin, std::size_t count) {
  const auto& av = a.value();
  require_nchw(av, "slice_channels input");
  const std::size_t N = av.dim(0), C = av.dim(1), HW = av.dim(2) * av.dim(3);
  if (begin + count > C) {
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") exceeds axis 1 extent " + std::to_string(C));
  }
  Tensor<T> out(Shape{N, count, av.dim(2), av.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(av.raw() + (n * C + begin) * HW, count * HW, out.raw() + n * count * HW);
  }
  return Var<T>::make("slice_channels", std::move(out), {a},
                      [N, C, HW, begin, count](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
                        if (!gin[0]) return;
                        for (std::size_t n = 0; n < N; ++n) {
                          T* d = gin[0]->raw() + (n * C + begin) * HW;
                          const T* g = gout.raw() + n * count * HW;
                          for (std::size_t i = 0; i < count * HW; ++i) d[i] += g[i];
                        }
                      });
}

// ---------------------------------------------------------------- resample

namespace {

// Interpolation taps along one axis: out[i] = w0 * in[i0] + w1 * in[i1].
struct AxisTaps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w0, w1;
};

AxisTaps axis_taps(std::size_t in, std::size_t out, ResampleMode mode) {
  AxisTaps t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w0.resize(out);
  t.w1.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (mode == ResampleMode::nearest) {
      const auto s = std::min(static_cast<std::size_t>(std::floor(static_cast<double>(o) * scale)), in - 1);
      t.i0[o] = t.i1[o] = s;
      t.w0[o] = 1.0;
      t.w1[o] = 0.0;
    } else {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
      const auto hi = lo + 1 < in ? lo + 1 : lo;
      const double frac = src - static_cast<double>(lo);
      t.i0[o] = lo;
      t.i1[o] = hi;
      t.w0[o] = 1.0 - frac;
      t.w1[o] = frac;
    }
  }
  return t;
}

}  // namespace

template <typename T>
Var<T> resample(const Var<T>& input, std::size_t out_h, std::size_t out_w, ResampleMode mode) {
  const auto& x = input.value();
  require_nchw(x, "resample input");
  if (out_h == 0 || out_w == 0) throw DimensionError("resample: output extent must be >= 1");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H == out_h && W == out_w) {
    // Identity under the half-pixel convention; keep it exact.
    return Var<T>::make("resample", x, {input}, [](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
      if (!gin[0]) return;
      for (std::size_t i = 0; i < gout.numel(); ++i) (*gin[0])[i] += gout[i];
    });
  }
  auto ty = std::make_shared<AxisTaps>(axis_taps(H, out_h, mode));
  auto tx = std::make_shared<AxisTaps>(axis_taps(W, out_w, mode));
  Tensor<T> out(Shape{N, C, out_h, out_w});
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* src = x.raw() + p * H * W;
    T* dst = out.raw() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const T* r0 = src + ty->i0[oy] * W;
      const T* r1 = src + ty->i1[oy] * W;
      const T wy0 = static_cast<T>(ty->w0[oy]), wy1 = static_cast<T>(ty->w1[oy]);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = tx->i0[ox], x1 = tx->i1[ox];
        const T wx0 = static_cast<T>(tx->w0[ox]), wx1 = static_cast<T>(tx->w1[ox]);
        dst[oy * out_w + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return Var<T>::make("resample", std::move(out), {input},
                      [ty, tx, H, W, out_h, out_w](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
                        if (!gin[0]) return;
                        const std::size_t planes = gout.numel() / (out_h * out_w);
                        for (std::size_t p = 0; p < planes; ++p) {
                          T* d = gin[0]->raw() + p * H * W;
                          const T* g = gout.raw() + p * out_h * out_w;
                          for (std::size_t oy = 0; oy < out_h; ++oy) {
                            T* r0 = d + ty->i0[oy] * W;
                            T* r1 = d + ty->i1[oy] * W;
                            const T wy0 = static_cast<T>(ty->w0[oy]), wy1 = static_cast<T>(ty->w1[oy]);
                            for (std::size_t ox = 0; ox < out_w; ++ox) {
                              const T v = g[oy * out_w + ox];
                              const std::size_t x0 = tx->i0[ox], x1 = tx->i1[ox];
                              const T wx0 = static_cast<T>(tx->w0[ox]), wx1 = static_cast<T>(tx->w1[ox]);
                              r0[x0] += v * wy0 * wx0;
                              r0[x1] += v * wy0 * wx1;
                              r1[x0] += v * wy1 * wx0;
                              r1[x1] += v * wy1 * wx1;
                            }
                          }
                        }
                      });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  double s = 0;
  for (T v : a.value().data()) s += v;
  return Var<T>::make("sum", Tensor<T>::scalar(static_cast<T>(s)), {a},
                      [](const Node<T>&, const Tensor<T>& gout, GradSlots<T>& gin) {
                        if (!gin[0]) return;
                        const T g = gout[0];
                        for (auto& d : gin[0]->data()) d += g;
                      });
}

namespace {

template <typename T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> mean_abs_error(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mean_abs_error");
  const std::size_t n = a.value().numel();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
  return Var<T>::make("mean_abs_error", Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n))), {a, b},
                      [n](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
                        const Tensor<T>& av = self.inputs[0]->value;
                        const Tensor<T>& bv = self.inputs[1]->value;
                        const T g = gout[0] / static_cast<T>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                          const T d = av[i] - bv[i];
                          const T s = d > 0 ? g : d < 0 ? -g : T{0};
                          if (gin[0]) (*gin[0])[i] += s;
                          if (gin[1]) (*gin[1])[i] -= s;
                        }
                      });
}

template <typename T>
Var<T> mean_squared_error(const Var<T>& a, const Var<T>& b) {
  require_same(a, b, "mean_squared_error");
  const std::size_t n = a.value().numel();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.value()[i]) - b.value()[i];
    s += d * d;
  }
  return Var<T>::make("mean_squared_error", Tensor<T>::scalar(static_cast<T>(s / static_cast<double>(n))), {a, b},
                      [n](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
                        const Tensor<T>& av = self.inputs[0]->value;
                        const Tensor<T>& bv = self.inputs[1]->value;
                        const T g = T{2} * gout[0] / static_cast<T>(n);
                        for (std::size_t i = 0; i < n; ++i) {
                          const T d = (av[i] - bv[i]) * g;
                          if (gin[0]) (*gin[0])[i] += d;
                          if (gin[1]) (*gin[1])[i] -= d;
                        }
                      });
}

#define MTUR_INSTANTIATE_OPS(T)                                                                     \
  template Var<T> group_norm(const Var<T>&, std::size_t, const Var<T>&, const Var<T>&, double);    \
  template Var<T> activation(const Var<T>&, Activation);                                            \
  template Var<T> elementwise(const Var<T>&, const Var<T>&, Elementwise);                           \
  template Var<T> scale(const Var<T>&, T);                                                          \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                    \
  template Var<T> slice_channels(const Var<T>&, std::size_t, std::size_t);                          \
  template Var<T> resample(const Var<T>&, std::size_t, std::size_t, ResampleMode);                  \
  template Var<T> sum(const Var<T>&);                                                               \
  template Var<T> mean_abs_error(const Var<T>&, const Var<T>&);                                     \
  template Var<T> mean_squared_error(const Var<T>&, const Var<T>&);

MTUR_INSTANTIATE_OPS(float)
MTUR_INSTANTIATE_OPS(double)

}  // namespace mtur
