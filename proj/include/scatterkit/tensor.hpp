#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "scatterkit/common.hpp"

namespace sk {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "x" : "") + std::to_string(s[i]);
  return r + "]";
}

// Dense row-major n-d array with a value slot and a lazily allocated
// gradient slot. Doubles in tests, floats in training; complex element
// types are used as plain containers (no grad).
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> v;
  std::vector<T> g;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), T{}) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), v(shape_numel(shape), fill) {}

  std::size_t numel() const { return v.size(); }

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T{});
  }

  // rank-1
  T& at(std::size_t i) { return v[i]; }
  T at(std::size_t i) const { return v[i]; }
  // rank-2 [rows, cols]
  T& at(std::size_t r, std::size_t c) { return v[r * shape[1] + c]; }
  T at(std::size_t r, std::size_t c) const { return v[r * shape[1] + c]; }
  // rank-3 [c, h, w]
  T& at(std::size_t c, std::size_t y, std::size_t x) { return v[(c * shape[1] + y) * shape[2] + x]; }
  T at(std::size_t c, std::size_t y, std::size_t x) const { return v[(c * shape[1] + y) * shape[2] + x]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class T>
inline Tensor<T> tensor1(std::initializer_list<T> vals) {
  Tensor<T> t(Shape{vals.size()});
  std::size_t i = 0;
  for (T x : vals) t.v[i++] = x;
  return t;
}

using RMat = Tensor<double>;                // rank-2 real matrix
using CMat = Tensor<std::complex<double>>;  // rank-2 complex matrix

template <class Src, class Dst>
inline Tensor<Dst> tensor_cast(const Tensor<Src>& a) {
  Tensor<Dst> r(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) r.v[i] = static_cast<Dst>(a.v[i]);
  return r;
}

// Mean-pool by an integer factor; used to bring rendered chips down to the
// training input size. Requires dims divisible by the factor.
template <class T>
inline Tensor<T> box_downsample2d(const Tensor<T>& a, std::size_t factor) {
  require(a.shape.size() == 2, "box_downsample2d: rank-2 expected");
  require(factor >= 1 && a.shape[0] % factor == 0 && a.shape[1] % factor == 0,
          "box_downsample2d: dims must divide by factor");
  std::size_t H = a.shape[0] / factor, W = a.shape[1] / factor;
  Tensor<T> r(Shape{H, W});
  const T inv = static_cast<T>(1.0 / double(factor * factor));
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      T acc{};
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) acc += a.at(y * factor + dy, x * factor + dx);
      r.at(y, x) = acc * inv;
    }
  return r;
}

// Bilinear resample of a rank-2 map to [H, W] (half-pixel centers). Exact
// identity when sizes already match.
template <class T>
inline Tensor<T> bilinear_resize2d(const Tensor<T>& a, std::size_t H, std::size_t W) {
  require(a.shape.size() == 2, "bilinear_resize2d: rank-2 expected");
  std::size_t h = a.shape[0], w = a.shape[1];
  if (h == H && w == W) return a;
  Tensor<T> r(Shape{H, W});
  const double sy = double(h) / double(H), sx = double(w) / double(W);
  for (std::size_t y = 0; y < H; ++y) {
    double fy = (double(y) + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    std::size_t y0 = static_cast<std::size_t>(fy);
    if (y0 > h - 1) y0 = h - 1;
    std::size_t y1 = (y0 + 1 < h) ? y0 + 1 : y0;
    double wy = fy - double(y0);
    for (std::size_t x = 0; x < W; ++x) {
      double fx = (double(x) + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      std::size_t x0 = static_cast<std::size_t>(fx);
      if (x0 > w - 1) x0 = w - 1;
      std::size_t x1 = (x0 + 1 < w) ? x0 + 1 : x0;
      double wx = fx - double(x0);
      double val = (1 - wy) * ((1 - wx) * double(a.at(y0, x0)) + wx * double(a.at(y0, x1))) +
                   wy * ((1 - wx) * double(a.at(y1, x0)) + wx * double(a.at(y1, x1)));
      r.at(y, x) = static_cast<T>(val);
    }
  }
  return r;
}

}  // namespace sk
