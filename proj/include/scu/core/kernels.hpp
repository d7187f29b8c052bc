#pragma once

// Dense numeric kernels shared by the autodiff ops and the frozen feature
// extractor. Convolutions lower to im2col + Eigen GEMM.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <type_traits>

#include "scu/core/tensor.hpp"

namespace scu::kernels {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  int channels = 0;
  int in_h = 0, in_w = 0;
  int kernel = 1, stride = 1, pad = 0;
  int out_h = 0, out_w = 0;

  static ConvGeometry make(int channels, int in_h, int in_w, int kernel, int stride, int pad) {
    ConvGeometry g{channels, in_h, in_w, kernel, stride, pad, 0, 0};
    g.out_h = (in_h + 2 * pad - kernel) / stride + 1;
    g.out_w = (in_w + 2 * pad - kernel) / stride + 1;
    if (g.out_h <= 0 || g.out_w <= 0)
      throw DimensionError("convolution output would be empty for input " + std::to_string(in_h) + "x" +
                           std::to_string(in_w));
    return g;
  }

  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx][oy*out_w + ox] = x[c][oy*s - p + ky][ox*s - p + kx] (zero outside).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(g.cols());
  for (int c = 0; c < g.channels; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates into x.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* x) {
  const int k = g.kernel;
  const std::size_t ncols = static_cast<std::size_t>(g.cols());
  for (int c = 0; c < g.channels; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + static_cast<std::size_t>((c * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.out_w;
          T* dst = xc + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// x [Cin,H,W], weight [Cout,Cin,k,k], bias [Cout] or empty.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::type_identity_t<const Tensor<T>*> bias, int stride, int pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) || weight.dim(2) != weight.dim(3))
    throw DimensionError("conv2d: input " + shape_str(x.shape) + " incompatible with weight " +
                         shape_str(weight.shape));
  const int cout = weight.dim(0);
  const auto g = ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), weight.dim(2), stride, pad);
  RowMat<T> cols(g.rows(), g.cols());
  im2col(x.ptr(), g, cols.data());
  Tensor<T> out({cout, g.out_h, g.out_w});
  MatMap<T> o(out.ptr(), cout, g.cols());
  o.noalias() = ConstMatMap<T>(weight.ptr(), cout, g.rows()) * cols;
  if (bias && !bias->empty())
    for (int co = 0; co < cout; ++co) o.row(co).array() += bias->data[static_cast<std::size_t>(co)];
  return out;
}

// Accumulates into dx / dweight / dbias (each may be null).
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dout, int stride, int pad,
                     Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const int cout = weight.dim(0);
  const auto g = ConvGeometry::make(x.dim(0), x.dim(1), x.dim(2), weight.dim(2), stride, pad);
  ConstMatMap<T> d(dout.ptr(), cout, g.cols());
  if (dweight) {
    RowMat<T> cols(g.rows(), g.cols());
    im2col(x.ptr(), g, cols.data());
    MatMap<T>(dweight->ptr(), cout, g.rows()).noalias() += d * cols.transpose();
  }
  if (dbias)
    for (int co = 0; co < cout; ++co) dbias->data[static_cast<std::size_t>(co)] += d.row(co).sum();
  if (dx) {
    RowMat<T> dcols(g.rows(), g.cols());
    dcols.noalias() = ConstMatMap<T>(weight.ptr(), cout, g.rows()).transpose() * d;
    col2im(dcols.data(), g, dx->ptr());
  }
}

// Transposed convolution: x [Cin,H,W], weight [Cin,Cout,k,k]; output (H-1)*s - 2p + k.
template <typename T>
Tensor<T> conv_transpose2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::type_identity_t<const Tensor<T>*> bias, int stride,
                                   int pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(0) != x.dim(0) || weight.dim(2) != weight.dim(3))
    throw DimensionError("conv_transpose2d: input " + shape_str(x.shape) + " incompatible with weight " +
                         shape_str(weight.shape));
  const int cin = x.dim(0), cout = weight.dim(1), k = weight.dim(2);
  const int oh = (x.dim(1) - 1) * stride - 2 * pad + k;
  const int ow = (x.dim(2) - 1) * stride - 2 * pad + k;
  const auto g = ConvGeometry::make(cout, oh, ow, k, stride, pad);
  if (g.out_h != x.dim(1) || g.out_w != x.dim(2))
    throw DimensionError("conv_transpose2d: inconsistent geometry");
  const int pin = x.dim(1) * x.dim(2);
  RowMat<T> cols(g.rows(), pin);
  cols.noalias() = ConstMatMap<T>(weight.ptr(), cin, g.rows()).transpose() * ConstMatMap<T>(x.ptr(), cin, pin);
  Tensor<T> out({cout, oh, ow});
  col2im(cols.data(), g, out.ptr());
  if (bias && !bias->empty()) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int co = 0; co < cout; ++co) {
      T* p = out.ptr() + co * plane;
      const T b = bias->data[static_cast<std::size_t>(co)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
  return out;
}

template <typename T>
void conv_transpose2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dout, int stride,
                               int pad, Tensor<T>* dx, Tensor<T>* dweight, Tensor<T>* dbias) {
  const int cin = x.dim(0), cout = weight.dim(1), k = weight.dim(2);
  const auto g = ConvGeometry::make(cout, dout.dim(1), dout.dim(2), k, stride, pad);
  const int pin = x.dim(1) * x.dim(2);
  RowMat<T> dcols(g.rows(), pin);
  im2col(dout.ptr(), g, dcols.data());
  if (dx)
    MatMap<T>(dx->ptr(), cin, pin).noalias() += ConstMatMap<T>(weight.ptr(), cin, g.rows()) * dcols;
  if (dweight)
    MatMap<T>(dweight->ptr(), cin, g.rows()).noalias() += ConstMatMap<T>(x.ptr(), cin, pin) * dcols.transpose();
  if (dbias) {
    const std::size_t plane = static_cast<std::size_t>(dout.dim(1)) * dout.dim(2);
    for (int co = 0; co < cout; ++co) {
      const T* p = dout.ptr() + co * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      dbias->data[static_cast<std::size_t>(co)] += s;
    }
  }
}

// Half-pixel-centre bilinear sampling taps along one axis.
struct Taps {
  int i0, i1;
  double w0, w1;
};

inline std::vector<Taps> bilinear_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    int i0 = static_cast<int>(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double l = s - i0;
    taps[static_cast<std::size_t>(o)] = {i0, i1, 1.0 - l, l};
  }
  return taps;
}

template <typename T>
Tensor<T> resize_bilinear_forward(const Tensor<T>& x, int out_h, int out_w) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  Tensor<T> out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const double v = a.w0 * (b.w0 * x(ch, a.i0, b.i0) + b.w1 * x(ch, a.i0, b.i1)) +
                         a.w1 * (b.w0 * x(ch, a.i1, b.i0) + b.w1 * x(ch, a.i1, b.i1));
        out(ch, oy, ox) = static_cast<T>(v);
      }
    }
  return out;
}

template <typename T>
void resize_bilinear_backward(const Tensor<T>& dout, Tensor<T>& dx) {
  const int c = dx.dim(0), h = dx.dim(1), w = dx.dim(2);
  const int out_h = dout.dim(1), out_w = dout.dim(2);
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const double g = dout(ch, oy, ox);
        dx(ch, a.i0, b.i0) += static_cast<T>(g * a.w0 * b.w0);
        dx(ch, a.i0, b.i1) += static_cast<T>(g * a.w0 * b.w1);
        dx(ch, a.i1, b.i0) += static_cast<T>(g * a.w1 * b.w0);
        dx(ch, a.i1, b.i1) += static_cast<T>(g * a.w1 * b.w1);
      }
    }
}

}  // namespace scu::kernels
