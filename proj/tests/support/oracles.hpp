#pragma once

// Loop-level reference implementations used as independent oracles. Nothing
// here touches the tape or the im2col kernels.

#include <algorithm>
#include <cmath>
#include <vector>

#include "scu/core/tensor.hpp"

namespace scu::oracle {

using Vec = std::vector<double>;

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Tensor<double> conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride, int pad) {
  const int cout = w.dim(0), cin = w.dim(1), k = w.dim(2);
  const int oh = (x.dim(1) + 2 * pad - k) / stride + 1, ow = (x.dim(2) + 2 * pad - k) / stride + 1;
  Tensor<double> out({cout, oh, ow});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = b ? b->data[static_cast<std::size_t>(co)] : 0.0;
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= x.dim(1) || ix >= x.dim(2)) continue;
              s += x(ci, iy, ix) * w.data[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
            }
        out(co, oy, ox) = s;
      }
  return out;
}

// Scatter form: every input pixel paints a k x k stamp at (iy*s - p, ix*s - p).
inline Tensor<double> conv_transpose(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                                     int pad) {
  const int cin = w.dim(0), cout = w.dim(1), k = w.dim(2);
  const int oh = (x.dim(1) - 1) * stride - 2 * pad + k, ow = (x.dim(2) - 1) * stride - 2 * pad + k;
  Tensor<double> out({cout, oh, ow});
  for (int ci = 0; ci < cin; ++ci)
    for (int iy = 0; iy < x.dim(1); ++iy)
      for (int ix = 0; ix < x.dim(2); ++ix)
        for (int co = 0; co < cout; ++co)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int oy = iy * stride - pad + ky, ox = ix * stride - pad + kx;
              if (oy < 0 || ox < 0 || oy >= oh || ox >= ow) continue;
              out(co, oy, ox) += x(ci, iy, ix) * w.data[((static_cast<std::size_t>(ci) * cout + co) * k + ky) * k + kx];
            }
  if (b)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) out(co, y, xx) += b->data[static_cast<std::size_t>(co)];
  return out;
}

inline Tensor<double> instance_norm(const Tensor<double>& x, double eps = 1e-5) {
  Tensor<double> y(x.shape);
  const int h = x.dim(1), w = x.dim(2);
  for (int c = 0; c < x.dim(0); ++c) {
    double mu = 0, var = 0;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) mu += x(c, i, j);
    mu /= h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) var += (x(c, i, j) - mu) * (x(c, i, j) - mu);
    var /= h * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) y(c, i, j) = (x(c, i, j) - mu) / std::sqrt(var + eps);
  }
  return y;
}

// out = fc2 * relu(fc1 * v), weights row-major [out, in].
inline Vec mlp(const Tensor<double>& fc1, const Tensor<double>& fc2, const Vec& v) {
  Vec hidden(static_cast<std::size_t>(fc1.dim(0))), out(static_cast<std::size_t>(fc2.dim(0)));
  for (int i = 0; i < fc1.dim(0); ++i) {
    double s = 0;
    for (int j = 0; j < fc1.dim(1); ++j) s += fc1.data[static_cast<std::size_t>(i * fc1.dim(1) + j)] * v[static_cast<std::size_t>(j)];
    hidden[static_cast<std::size_t>(i)] = std::max(0.0, s);
  }
  for (int i = 0; i < fc2.dim(0); ++i) {
    double s = 0;
    for (int j = 0; j < fc2.dim(1); ++j) s += fc2.data[static_cast<std::size_t>(i * fc2.dim(1) + j)] * hidden[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

inline Vec channel_attention(const Tensor<double>& f, const Tensor<double>& fc1, const Tensor<double>& fc2) {
  const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
  Vec avg(static_cast<std::size_t>(c)), mx(static_cast<std::size_t>(c), -1e300);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        avg[static_cast<std::size_t>(ch)] += f(ch, i, j) / (h * w);
        mx[static_cast<std::size_t>(ch)] = std::max(mx[static_cast<std::size_t>(ch)], f(ch, i, j));
      }
  auto a = mlp(fc1, fc2, avg), m = mlp(fc1, fc2, mx);
  Vec out(static_cast<std::size_t>(c));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(a[i] + m[i]);
  return out;
}

inline Tensor<double> spatial_attention(const Tensor<double>& f, const Tensor<double>& w, double bias) {
  const int c = f.dim(0), h = f.dim(1), wd = f.dim(2), k = w.dim(2);
  Tensor<double> pooled({2, h, wd});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < wd; ++j) {
      double s = 0, m = -1e300;
      for (int ch = 0; ch < c; ++ch) {
        s += f(ch, i, j);
        m = std::max(m, f(ch, i, j));
      }
      pooled(0, i, j) = s / c;
      pooled(1, i, j) = m;
    }
  Tensor<double> b({1}, bias);
  auto z = conv(pooled, w, &b, 1, k / 2);
  for (auto& v : z.data) v = sigmoid(v);
  return z;
}

inline Tensor<double> cbam(const Tensor<double>& f, const Tensor<double>& fc1, const Tensor<double>& fc2,
                           const Tensor<double>& sw, double sb) {
  const auto ca = channel_attention(f, fc1, fc2);
  Tensor<double> fc(f.shape);
  for (int ch = 0; ch < f.dim(0); ++ch)
    for (int i = 0; i < f.dim(1); ++i)
      for (int j = 0; j < f.dim(2); ++j) fc(ch, i, j) = f(ch, i, j) * ca[static_cast<std::size_t>(ch)];
  const auto sa = spatial_attention(fc, sw, sb);
  for (int ch = 0; ch < f.dim(0); ++ch)
    for (int i = 0; i < f.dim(1); ++i)
      for (int j = 0; j < f.dim(2); ++j) fc(ch, i, j) *= sa(0, i, j);
  return fc;
}

inline Tensor<double> concat(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.numel()));
  return out;
}

// mean over C*H*W of |(1 - M) g - (1 - M) o|
inline double background_loss(const Tensor<double>& g, const Tensor<double>& o, const Tensor<double>& m) {
  double s = 0;
  for (int c = 0; c < g.dim(0); ++c)
    for (int y = 0; y < g.dim(1); ++y)
      for (int x = 0; x < g.dim(2); ++x) {
        const double keep = 1.0 - m(0, y, x);
        s += std::abs(keep * g(c, y, x) - keep * o(c, y, x));
      }
  return s / static_cast<double>(g.numel());
}

inline double mean_abs(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.numel());
}

// Unbiased MMD^2 with k(x, y) = (x.y / d + 1)^3, explicit double sums.
inline double kid(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  const std::size_t d = a[0].size();
  auto k = [d](const Vec& x, const Vec& y) {
    double dot = 0;
    for (std::size_t i = 0; i < d; ++i) dot += x[i] * y[i];
    return std::pow(dot / static_cast<double>(d) + 1.0, 3);
  };
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  double saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j) saa += k(a[i], a[j]);
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) sbb += k(b[i], b[j]);
  for (const auto& x : a)
    for (const auto& y : b) sab += k(x, y);
  return saa / (n * (n - 1)) + sbb / (m * (m - 1)) - 2 * sab / (n * m);
}

struct Box {
  int x0, y0, x1, y1;
};

inline double iou(const Box& a, const Box& b) {
  const int iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const int ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = static_cast<double>(iw) * ih;
  const double uni = static_cast<double>(a.x1 - a.x0) * (a.y1 - a.y0) + static_cast<double>(b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct Det {
  std::string image;
  Box box;
  double conf;
};

struct Gt {
  std::string image;
  Box box;
};

// Recomputes the greedy matching from scratch for every prefix of the
// confidence ranking, then takes the max-precision envelope at each of the
// 101 recall points directly.
inline double average_precision(const std::vector<Det>& dets, const std::vector<Gt>& gts, double thr) {
  if (gts.empty()) return 0.0;
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dets[a].conf > dets[b].conf; });
  std::vector<double> prec, rec;
  for (std::size_t k = 1; k <= order.size(); ++k) {
    std::vector<bool> used(gts.size(), false);
    int tp = 0;
    for (std::size_t r = 0; r < k; ++r) {
      const auto& d = dets[order[r]];
      double best = -1;
      std::size_t bi = 0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || gts[g].image != d.image) continue;
        const double v = iou(d.box, gts[g].box);
        if (v > best) {
          best = v;
          bi = g;
        }
      }
      if (best >= thr) {
        used[bi] = true;
        ++tp;
      }
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(k));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  double ap = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double p = 0;
    for (std::size_t k = 0; k < prec.size(); ++k)
      if (rec[k] >= r) p = std::max(p, prec[k]);
    ap += p;
  }
  return ap / 101.0;
}

}  // namespace scu::oracle
