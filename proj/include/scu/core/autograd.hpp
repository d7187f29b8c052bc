#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// A Tape records every op as a node holding its value, a lazily allocated
// gradient, and a backward closure. Nodes are appended in evaluation order,
// so a single reverse sweep from the root is a valid topological order.

#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <type_traits>

#include "scu/core/kernels.hpp"

namespace scu::ag {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape; }
  T item() const { return value().data.at(0); }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
  };

  // With record=false no backward closures are stored (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> v) { return push(std::move(v), false, {}); }
  Var<T> variable(Tensor<T> v) { return push(std::move(v), record_, {}); }

  Var<T> emit(Tensor<T> v, std::initializer_list<Var<T>> inputs, Backward fn) {
    bool rg = false;
    if (record_)
      for (const auto& in : inputs) rg = rg || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
    return push(std::move(v), rg, rg ? std::move(fn) : Backward{});
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(int id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>::zeros_like(n.value);
    return n.grad;
  }
  Tensor<T>& grad(Var<T> v) { return grad(v.id); }
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

  // Seeds d(root)/d(root) = scale and sweeps backwards. Root must hold one element.
  void backward(Var<T> root, T scale = T(1)) {
    if (value(root).numel() != 1) throw DimensionError("backward: root must be a scalar, got " + shape_str(root.shape()));
    if (!requires_grad(root.id)) return;
    grad(root.id).data[0] += scale;
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.requires_grad && n.backward && !n.grad.empty()) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return record_; }

 private:
  Var<T> push(Tensor<T> v, bool rg, Backward fn) {
    nodes_.push_back(Node{std::move(v), {}, rg, std::move(fn)});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::deque<Node> nodes_;
  bool record_;
};

namespace detail {

template <typename T>
bool wants(Tape<T>& t, Var<T> v) {
  return t.requires_grad(v.id);
}

template <typename T, typename F>
Var<T> unary(Var<T> x, F&& f, std::function<T(T /*x*/, T /*y*/)> df) {
  auto& t = *x.tape;
  const auto& xv = x.value();
  Tensor<T> y(xv.shape);
  for (std::size_t i = 0; i < xv.numel(); ++i) y.data[i] = f(xv.data[i]);
  const int xi = x.id;
  return t.emit(std::move(y), {x}, [xi, df](Tape<T>& tp, int self) {
    const auto& xv2 = tp.value(xi);
    const auto& yv = tp.value(self);
    const auto& gy = tp.grad(self);
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < xv2.numel(); ++i) gx.data[i] += gy.data[i] * df(xv2.data[i], yv.data[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += b.value().data[i];
  const int ai = a.id, bi = b.id;
  return a.tape->emit(std::move(y), {a, b}, [ai, bi](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    for (int id : {ai, bi})
      if (t.requires_grad(id)) {
        auto& gx = t.grad(id);
        for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
      }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] -= b.value().data[i];
  const int ai = a.id, bi = b.id;
  return a.tape->emit(std::move(y), {a, b}, [ai, bi](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] *= b.value().data[i];
  const int ai = a.id, bi = b.id;
  return a.tape->emit(std::move(y), {a, b}, [ai, bi](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      const auto& bv = t.value(bi);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * bv.data[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      const auto& av = t.value(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i] * av.data[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, std::type_identity_t<T> s) {
  return detail::unary<T>(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> x, std::type_identity_t<T> s) {
  return detail::unary<T>(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> leaky_relu(Var<T> x, std::type_identity_t<T> slope) {
  return detail::unary<T>(x, [slope](T v) { return v > 0 ? v : slope * v; },
                          [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}

// log(1 + e^x), overflow-safe.
template <typename T>
Var<T> softplus(Var<T> x) {
  return detail::unary<T>(
      x, [](T v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](T v, T) { return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); });
}

// Gradient passes only where the input was not clipped.
template <typename T>
Var<T> clamp(Var<T> x, std::type_identity_t<T> lo, std::type_identity_t<T> hi) {
  return detail::unary<T>(x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
                          [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> abs(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return std::abs(v); },
                          [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> square(Var<T> x) {
  return detail::unary<T>(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data) s += v;
  const int xi = x.id;
  return x.tape->emit(Tensor<T>({1}, s), {x}, [xi](Tape<T>& t, int self) {
    const T g = t.grad(self).data[0];
    for (auto& v : t.grad(xi).data) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().numel()));
}

// Sum of scalar vars.
template <typename T>
Var<T> add_all(std::initializer_list<Var<T>> xs) {
  auto it = xs.begin();
  Var<T> acc = *it++;
  for (; it != xs.end(); ++it) acc = add(acc, *it);
  return acc;
}

template <typename T>
Var<T> add_all(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw DimensionError("add_all: no terms");
  Var<T> acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

// ---------------------------------------------------------------- shape ops

template <typename T>
Var<T> reshape(Var<T> x, Shape s) {
  if (shape_numel(s) != x.value().numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(s));
  Tensor<T> y(std::move(s), x.value().data);
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx.data[i] += g.data[i];
  });
}

// Concatenate two [C,H,W] tensors along channels; `a` comes first.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const auto &av = a.value(), &bv = b.value();
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    throw DimensionError("concat_channels: spatial mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  Tensor<T> y({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data.begin(), av.data.end(), y.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(av.numel()));
  const int ai = a.id, bi = b.id;
  const std::size_t na = av.numel();
  return a.tape->emit(std::move(y), {a, b}, [ai, bi, na](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ai)) {
      auto& ga = t.grad(ai);
      for (std::size_t i = 0; i < na; ++i) ga.data[i] += g.data[i];
    }
    if (t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (std::size_t i = 0; i < gb.numel(); ++i) gb.data[i] += g.data[na + i];
    }
  });
}

// Copy of the rectangle [y0,y1) x [x0,x1) of a [C,H,W] tensor.
template <typename T>
Var<T> crop(Var<T> x, int y0, int x0, int y1, int x1) {
  const auto& xv = x.value();
  if (y0 < 0 || x0 < 0 || y1 > xv.dim(1) || x1 > xv.dim(2) || y0 >= y1 || x0 >= x1)
    throw BoundsError("crop: rectangle outside " + shape_str(xv.shape));
  const int c = xv.dim(0);
  Tensor<T> y({c, y1 - y0, x1 - x0});
  for (int ch = 0; ch < c; ++ch)
    for (int yy = y0; yy < y1; ++yy)
      for (int xx = x0; xx < x1; ++xx) y(ch, yy - y0, xx - x0) = xv(ch, yy, xx);
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, y0, x0](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (int ch = 0; ch < g.dim(0); ++ch)
      for (int yy = 0; yy < g.dim(1); ++yy)
        for (int xx = 0; xx < g.dim(2); ++xx) gx(ch, yy + y0, xx + x0) += g(ch, yy, xx);
  });
}

template <typename T>
Var<T> resize_bilinear(Var<T> x, int out_h, int out_w) {
  auto y = kernels::resize_bilinear_forward(x.value(), out_h, out_w);
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi](Tape<T>& t, int self) {
    kernels::resize_bilinear_backward(t.grad(self), t.grad(xi));
  });
}

// ---------------------------------------------------------------- broadcasting

// x [C,H,W] scaled per channel by w [C].
template <typename T>
Var<T> mul_channelwise(Var<T> x, Var<T> w) {
  const auto &xv = x.value(), &wv = w.value();
  if (xv.rank() != 3 || wv.numel() != static_cast<std::size_t>(xv.dim(0)))
    throw DimensionError("mul_channelwise: " + shape_str(xv.shape) + " by " + shape_str(wv.shape));
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y = xv;
  for (int c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) y.data[c * plane + i] *= wv.data[static_cast<std::size_t>(c)];
  const int xi = x.id, wi = w.id;
  return x.tape->emit(std::move(y), {x, w}, [xi, wi, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.value(xi);
    const auto& wv2 = t.value(wi);
    const int c = xv2.dim(0);
    if (t.requires_grad(xi)) {
      auto& gx = t.grad(xi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gx.data[ch * plane + i] += g.data[ch * plane + i] * wv2.data[ch];
    }
    if (t.requires_grad(wi)) {
      auto& gw = t.grad(wi);
      for (int ch = 0; ch < c; ++ch) {
        T s = 0;
        for (std::size_t i = 0; i < plane; ++i) s += g.data[ch * plane + i] * xv2.data[ch * plane + i];
        gw.data[static_cast<std::size_t>(ch)] += s;
      }
    }
  });
}

// x [C,H,W] scaled per pixel by m [1,H,W].
template <typename T>
Var<T> mul_spatial(Var<T> x, Var<T> m) {
  const auto &xv = x.value(), &mv = m.value();
  if (xv.rank() != 3 || mv.rank() != 3 || mv.dim(0) != 1 || mv.dim(1) != xv.dim(1) || mv.dim(2) != xv.dim(2))
    throw DimensionError("mul_spatial: " + shape_str(xv.shape) + " by " + shape_str(mv.shape));
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y = xv;
  for (int c = 0; c < xv.dim(0); ++c)
    for (std::size_t i = 0; i < plane; ++i) y.data[c * plane + i] *= mv.data[i];
  const int xi = x.id, mi = m.id;
  return x.tape->emit(std::move(y), {x, m}, [xi, mi, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.value(xi);
    const auto& mv2 = t.value(mi);
    const int c = xv2.dim(0);
    if (t.requires_grad(xi)) {
      auto& gx = t.grad(xi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gx.data[ch * plane + i] += g.data[ch * plane + i] * mv2.data[i];
    }
    if (t.requires_grad(mi)) {
      auto& gm = t.grad(mi);
      for (int ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) gm.data[i] += g.data[ch * plane + i] * xv2.data[ch * plane + i];
    }
  });
}

// Per-channel spatial average: [C,H,W] -> [C].
template <typename T>
Var<T> spatial_mean(Var<T> x) {
  const auto& xv = x.value();
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y({c});
  for (int ch = 0; ch < c; ++ch) {
    T s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += xv.data[ch * plane + i];
    y.data[static_cast<std::size_t>(ch)] = s / static_cast<T>(plane);
  }
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, plane](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t ch = 0; ch < g.numel(); ++ch)
      for (std::size_t i = 0; i < plane; ++i) gx.data[ch * plane + i] += g.data[ch] / static_cast<T>(plane);
  });
}

// Per-channel spatial maximum: [C,H,W] -> [C]; gradient routes to the first arg-max.
template <typename T>
Var<T> spatial_max(Var<T> x) {
  const auto& xv = x.value();
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y({c});
  std::vector<std::size_t> arg(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i)
      if (xv.data[ch * plane + i] > xv.data[ch * plane + best]) best = i;
    arg[static_cast<std::size_t>(ch)] = ch * plane + best;
    y.data[static_cast<std::size_t>(ch)] = xv.data[ch * plane + best];
  }
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, arg](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t ch = 0; ch < g.numel(); ++ch) gx.data[arg[ch]] += g.data[ch];
  });
}

// Mean across channels: [C,H,W] -> [1,H,W].
template <typename T>
Var<T> channel_mean(Var<T> x) {
  const auto& xv = x.value();
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y({1, xv.dim(1), xv.dim(2)});
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) y.data[i] += xv.data[ch * plane + i];
  for (auto& v : y.data) v /= static_cast<T>(c);
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, plane, c](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (int ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) gx.data[ch * plane + i] += g.data[i] / static_cast<T>(c);
  });
}

// Max across channels: [C,H,W] -> [1,H,W].
template <typename T>
Var<T> channel_max(Var<T> x) {
  const auto& xv = x.value();
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y({1, xv.dim(1), xv.dim(2)});
  std::vector<int> arg(plane, 0);
  for (std::size_t i = 0; i < plane; ++i) {
    int best = 0;
    for (int ch = 1; ch < c; ++ch)
      if (xv.data[ch * plane + i] > xv.data[best * plane + i]) best = ch;
    arg[i] = best;
    y.data[i] = xv.data[best * plane + i];
  }
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, plane, arg](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(xi);
    for (std::size_t i = 0; i < plane; ++i) gx.data[arg[i] * plane + i] += g.data[i];
  });
}

// ---------------------------------------------------------------- layers

// weight [out, in], x [in] (or any shape with `in` elements), bias [out] optional.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, std::type_identity_t<const Var<T>*> bias = nullptr) {
  const auto &xv = x.value(), &wv = weight.value();
  if (wv.rank() != 2 || static_cast<std::size_t>(wv.dim(1)) != xv.numel())
    throw DimensionError("linear: input " + shape_str(xv.shape) + " vs weight " + shape_str(wv.shape));
  const int out = wv.dim(0), in = wv.dim(1);
  Tensor<T> y({out});
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(y.ptr(), out).noalias() =
      kernels::ConstMatMap<T>(wv.ptr(), out, in) * Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(xv.ptr(), in);
  const int bi = bias ? bias->id : -1;
  if (bias)
    for (int o = 0; o < out; ++o) y.data[static_cast<std::size_t>(o)] += bias->value().data[static_cast<std::size_t>(o)];
  const int xi = x.id, wi = weight.id;
  auto fn = [xi, wi, bi, out, in](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& xv2 = t.value(xi);
    const auto& wv2 = t.value(wi);
    if (t.requires_grad(xi)) {
      auto& gx = t.grad(xi);
      for (int o = 0; o < out; ++o)
        for (int i = 0; i < in; ++i) gx.data[static_cast<std::size_t>(i)] += g.data[o] * wv2.data[o * in + i];
    }
    if (t.requires_grad(wi)) {
      auto& gw = t.grad(wi);
      for (int o = 0; o < out; ++o)
        for (int i = 0; i < in; ++i) gw.data[static_cast<std::size_t>(o) * in + i] += g.data[o] * xv2.data[i];
    }
    if (bi >= 0 && t.requires_grad(bi)) {
      auto& gb = t.grad(bi);
      for (int o = 0; o < out; ++o) gb.data[static_cast<std::size_t>(o)] += g.data[o];
    }
  };
  return bias ? x.tape->emit(std::move(y), {x, weight, *bias}, fn) : x.tape->emit(std::move(y), {x, weight}, fn);
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::type_identity_t<const Var<T>*> bias, int stride, int pad) {
  auto y = kernels::conv2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, stride, pad);
  const int xi = x.id, wi = weight.id, bi = bias ? bias->id : -1;
  auto fn = [xi, wi, bi, stride, pad](Tape<T>& t, int self) {
    Tensor<T>* dx = t.requires_grad(xi) ? &t.grad(xi) : nullptr;
    Tensor<T>* dw = t.requires_grad(wi) ? &t.grad(wi) : nullptr;
    Tensor<T>* db = (bi >= 0 && t.requires_grad(bi)) ? &t.grad(bi) : nullptr;
    kernels::conv2d_backward(t.value(xi), t.value(wi), t.grad(self), stride, pad, dx, dw, db);
  };
  return bias ? x.tape->emit(std::move(y), {x, weight, *bias}, fn) : x.tape->emit(std::move(y), {x, weight}, fn);
}

template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> weight, std::type_identity_t<const Var<T>*> bias, int stride, int pad) {
  auto y = kernels::conv_transpose2d_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr, stride, pad);
  const int xi = x.id, wi = weight.id, bi = bias ? bias->id : -1;
  auto fn = [xi, wi, bi, stride, pad](Tape<T>& t, int self) {
    Tensor<T>* dx = t.requires_grad(xi) ? &t.grad(xi) : nullptr;
    Tensor<T>* dw = t.requires_grad(wi) ? &t.grad(wi) : nullptr;
    Tensor<T>* db = (bi >= 0 && t.requires_grad(bi)) ? &t.grad(bi) : nullptr;
    kernels::conv_transpose2d_backward(t.value(xi), t.value(wi), t.grad(self), stride, pad, dx, dw, db);
  };
  return bias ? x.tape->emit(std::move(y), {x, weight, *bias}, fn) : x.tape->emit(std::move(y), {x, weight}, fn);
}

// Per-channel normalisation over the spatial plane, no affine parameters.
template <typename T>
Var<T> instance_norm(Var<T> x, std::type_identity_t<T> eps = T(1e-5)) {
  const auto& xv = x.value();
  const int c = xv.dim(0);
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor<T> y(xv.shape);
  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    const T* p = xv.ptr() + ch * plane;
    T mu = 0;
    for (std::size_t i = 0; i < plane; ++i) mu += p[i];
    mu /= static_cast<T>(plane);
    T var = 0;
    for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<T>(plane);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(ch)] = is;
    T* q = y.ptr() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) q[i] = (p[i] - mu) * is;
  }
  const int xi = x.id;
  return x.tape->emit(std::move(y), {x}, [xi, plane, c, inv_std](Tape<T>& t, int self) {
    const auto& g = t.grad(self);
    const auto& yv = t.value(self);
    auto& gx = t.grad(xi);
    const T n = static_cast<T>(plane);
    for (int ch = 0; ch < c; ++ch) {
      const T* gy = g.ptr() + ch * plane;
      const T* xh = yv.ptr() + ch * plane;
      T sg = 0, sgx = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        sg += gy[i];
        sgx += gy[i] * xh[i];
      }
      const T is = inv_std[static_cast<std::size_t>(ch)];
      T* out = gx.ptr() + ch * plane;
      for (std::size_t i = 0; i < plane; ++i) out[i] += is / n * (n * gy[i] - sg - xh[i] * sgx);
    }
  });
}

// ---------------------------------------------------------------- losses

// mean((x - target)^2)
template <typename T>
Var<T> mse_to(Var<T> x, std::type_identity_t<T> target) {
  return mean(square(add_scalar(x, -target)));
}

// mean(|a - b|)
template <typename T>
Var<T> l1(Var<T> a, Var<T> b) {
  return mean(abs(sub(a, b)));
}

}  // namespace scu::ag
