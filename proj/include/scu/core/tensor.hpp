#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "scu/core/errors.hpp"

namespace scu {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

// Dense row-major array. Images use the channels-first layout [C, H, W].
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T{}) : shape(std::move(s)), data(shape_numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_numel(shape))
      throw DimensionError("tensor data size " + std::to_string(data.size()) + " does not match shape " +
                           shape_str(shape));
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  std::size_t numel() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }
  int rank() const noexcept { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  int channels() const { return dim(0); }
  int height() const { return dim(1); }
  int width() const { return dim(2); }

  T& operator()(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& operator()(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  T* ptr() noexcept { return data.data(); }
  const T* ptr() const noexcept { return data.data(); }
  std::span<T> span() noexcept { return data; }
  std::span<const T> span() const noexcept { return data; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor& o) const = default;
};

template <typename T>
void require_shape(const Tensor<T>& t, const Shape& s, const char* what) {
  if (t.shape != s)
    throw DimensionError(std::string(what) + ": expected shape " + shape_str(s) + ", got " + shape_str(t.shape));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape != b.shape)
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data.begin(), t.data.end(), [](T v) { return std::isfinite(static_cast<double>(v)); });
}

}  // namespace scu
