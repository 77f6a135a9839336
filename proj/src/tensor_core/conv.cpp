#include <Eigen/Core>
#include <string>

#include "mtur/error.hpp"
#include "mtur/ops.hpp"

namespace mtur {

std::size_t conv_output_size(std::size_t in, std::size_t stride) {
  return in == 0 ? 0 : (in - 1) / stride + 1;
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) noexcept {
  if (n <= 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t oh, ow;
  // Source row/column (or -1 for zero padding) per (kernel tap, output pos).
  std::vector<std::ptrdiff_t> src_row, src_col;
  bool direct = false;  // 1x1, stride 1: the input plane is already the column matrix

  std::size_t k() const { return c * kh * kw; }
  std::size_t p() const { return oh * ow; }
};

ConvGeometry make_geometry(const Shape& in, const Shape& wt, const Conv2dOptions& opt) {
  ConvGeometry g{};
  g.n = in[0];
  g.c = in[1];
  g.h = in[2];
  g.w = in[3];
  g.o = wt[0];
  g.kh = wt[2];
  g.kw = wt[3];
  g.oh = conv_output_size(g.h, opt.stride);
  g.ow = conv_output_size(g.w, opt.stride);
  const auto d = static_cast<std::ptrdiff_t>(opt.dilation);
  const auto s = static_cast<std::ptrdiff_t>(opt.stride);
  const auto ph = d * static_cast<std::ptrdiff_t>(g.kh - 1) / 2;
  const auto pw = d * static_cast<std::ptrdiff_t>(g.kw - 1) / 2;
  auto fill = [&](std::vector<std::ptrdiff_t>& dst, std::size_t kernel, std::size_t out, std::size_t extent,
                  std::ptrdiff_t pad) {
    dst.resize(kernel * out);
    const auto n = static_cast<std::ptrdiff_t>(extent);
    for (std::size_t k = 0; k < kernel; ++k) {
      for (std::size_t o = 0; o < out; ++o) {
        std::ptrdiff_t i = static_cast<std::ptrdiff_t>(o) * s - pad + static_cast<std::ptrdiff_t>(k) * d;
        if (i < 0 || i >= n) i = opt.padding == PaddingMode::reflect ? reflect_index(i, n) : -1;
        dst[k * out + o] = i;
      }
    }
  };
  fill(g.src_row, g.kh, g.oh, g.h, ph);
  fill(g.src_col, g.kw, g.ow, g.w, pw);
  g.direct = g.kh == 1 && g.kw == 1 && opt.stride == 1;
  return g;
}

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t p = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = col + ((c * g.kh + ky) * g.kw + kx) * p;
        const std::ptrdiff_t* cols = &g.src_col[kx * g.ow];
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t sy = g.src_row[ky * g.oh + oy];
          T* dst = row + oy * g.ow;
          if (sy < 0) {
            std::fill(dst, dst + g.ow, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t sx = cols[ox];
            dst[ox] = sx < 0 ? T{0} : src[sx];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t p = g.p();
  for (std::size_t c = 0; c < g.c; ++c) {
    T* plane = dx + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = col + ((c * g.kh + ky) * g.kw + kx) * p;
        const std::ptrdiff_t* cols = &g.src_col[kx * g.ow];
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t sy = g.src_row[ky * g.oh + oy];
          if (sy < 0) continue;
          const T* src = row + oy * g.ow;
          T* dst = plane + static_cast<std::size_t>(sy) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t sx = cols[ox];
            if (sx >= 0) dst[sx] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const Conv2dOptions& opt) {
  const auto& x = input.value();
  const auto& w = weight.value();
  require_nchw(x, "conv2d input");
  if (w.rank() != 4) throw DimensionError("conv2d weight: expected OIHW, got " + shape_string(w.shape()));
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("conv2d: axis 1 (channels) of input is " + std::to_string(x.dim(1)) +
                         " but weight expects " + std::to_string(w.dim(1)));
  }
  if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0) {
    throw DimensionError("conv2d: kernel extent must be odd, got " + shape_string(w.shape()));
  }
  if (opt.stride < 1 || opt.dilation < 1) throw ConfigError("conv2d: stride and dilation must be >= 1");
  if (bias && (bias.value().numel() != w.dim(0))) {
    throw DimensionError("conv2d: axis 0 of bias is " + std::to_string(bias.value().numel()) + " but weight has " +
                         std::to_string(w.dim(0)) + " output channels");
  }
  for (std::size_t a = 2; a < 4; ++a) {
    if (x.dim(a) == 0) throw DimensionError("conv2d: axis " + std::to_string(a) + " of input is empty");
  }

  auto geo = std::make_shared<ConvGeometry>(make_geometry(x.shape(), w.shape(), opt));
  const std::size_t K = geo->k(), P = geo->p(), O = geo->o;
  Tensor<T> out(Shape{geo->n, O, geo->oh, geo->ow});
  AlignedVector<T> col(geo->direct ? 0 : K * P);
  Eigen::Map<const RowMat<T>> wm(w.raw(), O, K);
  for (std::size_t n = 0; n < geo->n; ++n) {
    const T* xn = x.raw() + n * geo->c * geo->h * geo->w;
    if (!geo->direct) im2col(*geo, xn, col.data());
    Eigen::Map<const RowMat<T>> cm(geo->direct ? xn : col.data(), K, P);
    Eigen::Map<RowMat<T>> om(out.raw() + n * O * P, O, P);
    om.noalias() = wm * cm;
    if (bias) {
      for (std::size_t o = 0; o < O; ++o) om.row(o).array() += bias.value()[o];
    }
  }

  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(bias);
  return Var<T>::make("conv2d", std::move(out), std::move(inputs),
                      [geo](const Node<T>& self, const Tensor<T>& gout, GradSlots<T>& gin) {
                        const auto& g = *geo;
                        const std::size_t K = g.k(), P = g.p(), O = g.o;
                        const Tensor<T>& x = self.inputs[0]->value;
                        const Tensor<T>& w = self.inputs[1]->value;
                        Eigen::Map<const RowMat<T>> wm(w.raw(), O, K);
                        AlignedVector<T> col(g.direct ? 0 : K * P);
                        AlignedVector<T> dcol(gin[0] && !g.direct ? K * P : 0);
                        for (std::size_t n = 0; n < g.n; ++n) {
                          const T* xn = x.raw() + n * g.c * g.h * g.w;
                          Eigen::Map<const RowMat<T>> gm(gout.raw() + n * O * P, O, P);
                          if (gin[1]) {
                            if (!g.direct) im2col(g, xn, col.data());
                            Eigen::Map<const RowMat<T>> cm(g.direct ? xn : col.data(), K, P);
                            Eigen::Map<RowMat<T>> dw(gin[1]->raw(), O, K);
                            dw.noalias() += gm * cm.transpose();
                          }
                          if (gin.size() > 2 && gin[2]) {
                            for (std::size_t o = 0; o < O; ++o) (*gin[2])[o] += gm.row(o).sum();
                          }
                          if (gin[0]) {
                            T* dxn = gin[0]->raw() + n * g.c * g.h * g.w;
                            if (g.direct) {
                              Eigen::Map<RowMat<T>> dx(dxn, K, P);
                              dx.noalias() += wm.transpose() * gm;
                            } else {
                              Eigen::Map<RowMat<T>> dc(dcol.data(), K, P);
                              dc.noalias() = wm.transpose() * gm;
                              col2im(g, dcol.data(), dxn);
                            }
                          }
                        }
                      });
}

template Var<float> conv2d(const Var<float>&, const Var<float>&, const Var<float>&, const Conv2dOptions&);
template Var<double> conv2d(const Var<double>&, const Var<double>&, const Var<double>&, const Conv2dOptions&);

}  // namespace mtur
