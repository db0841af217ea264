#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "scatterkit/common.hpp"
#include "scatterkit/tensor.hpp"

namespace sk::ad {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// valid output-index window [lo, hi) of one kernel tap: output index o maps to
// input index o*stride + tap - pad, kept inside [0, in)
inline void tap_window(std::size_t tap, std::size_t in, std::size_t out_n, std::size_t stride,
                       std::size_t pad, std::size_t& lo, std::size_t& hi) {
  const std::ptrdiff_t off = std::ptrdiff_t(tap) - std::ptrdiff_t(pad);
  std::ptrdiff_t l = 0, h = std::ptrdiff_t(out_n);
  if (stride == 1) {
    l = std::max<std::ptrdiff_t>(0, -off);
    h = std::clamp<std::ptrdiff_t>(std::ptrdiff_t(in) - off, l, std::ptrdiff_t(out_n));
  } else {
    while (l < h && std::ptrdiff_t(std::size_t(l) * stride) + off < 0) ++l;
    while (h > l && std::ptrdiff_t(std::size_t(h - 1) * stride) + off >= std::ptrdiff_t(in)) --h;
  }
  lo = std::size_t(l);
  hi = std::size_t(std::max(h, l));
}

// row-major patch matrix [wIn*kh*kw, Ho*Wo] over input channels
// [cbase, cbase + wIn); out-of-image taps stay zero
template <class T>
inline void im2col(const T* xd, std::size_t cbase, std::size_t wIn, std::size_t H, std::size_t W,
                   std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                   std::size_t Ho, std::size_t Wo, T* xc) {
  const std::size_t cols = Ho * Wo;
  std::fill(xc, xc + wIn * kh * kw * cols, T(0));
  for (std::size_t ci = 0; ci < wIn; ++ci) {
    const T* xplane = xd + (cbase + ci) * H * W;
    for (std::size_t u = 0; u < kh; ++u) {
      std::size_t ho_lo, ho_hi;
      tap_window(u, H, Ho, stride, pad, ho_lo, ho_hi);
      const std::ptrdiff_t hoff = std::ptrdiff_t(u) - std::ptrdiff_t(pad);
      for (std::size_t v = 0; v < kw; ++v) {
        std::size_t wo_lo, wo_hi;
        tap_window(v, W, Wo, stride, pad, wo_lo, wo_hi);
        const std::ptrdiff_t woff = std::ptrdiff_t(v) - std::ptrdiff_t(pad);
        T* xcrow = xc + ((ci * kh + u) * kw + v) * cols;
        for (std::size_t ho = ho_lo; ho < ho_hi; ++ho) {
          const T* xrow = xplane + std::size_t(std::ptrdiff_t(ho * stride) + hoff) * W;
          T* dst = xcrow + ho * Wo;
          if (stride == 1) {
            const std::size_t w0 = std::size_t(std::ptrdiff_t(wo_lo) + woff);
            std::copy(xrow + w0, xrow + w0 + (wo_hi - wo_lo), dst + wo_lo);
          } else {
            for (std::size_t wo = wo_lo; wo < wo_hi; ++wo)
              dst[wo] = xrow[std::size_t(std::ptrdiff_t(wo * stride) + woff)];
          }
        }
      }
    }
  }
}

// transpose of im2col as a scatter-add; overlapping taps accumulate
template <class T>
inline void col2im_add(const T* xc, std::size_t cbase, std::size_t wIn, std::size_t H,
                       std::size_t W, std::size_t kh, std::size_t kw, std::size_t stride,
                       std::size_t pad, std::size_t Ho, std::size_t Wo, T* dxd) {
  const std::size_t cols = Ho * Wo;
  for (std::size_t ci = 0; ci < wIn; ++ci) {
    T* dxplane = dxd + (cbase + ci) * H * W;
    for (std::size_t u = 0; u < kh; ++u) {
      std::size_t ho_lo, ho_hi;
      tap_window(u, H, Ho, stride, pad, ho_lo, ho_hi);
      const std::ptrdiff_t hoff = std::ptrdiff_t(u) - std::ptrdiff_t(pad);
      for (std::size_t v = 0; v < kw; ++v) {
        std::size_t wo_lo, wo_hi;
        tap_window(v, W, Wo, stride, pad, wo_lo, wo_hi);
        const std::ptrdiff_t woff = std::ptrdiff_t(v) - std::ptrdiff_t(pad);
        const T* xcrow = xc + ((ci * kh + u) * kw + v) * cols;
        for (std::size_t ho = ho_lo; ho < ho_hi; ++ho) {
          T* dxrow = dxplane + std::size_t(std::ptrdiff_t(ho * stride) + hoff) * W;
          const T* src = xcrow + ho * Wo;
          if (stride == 1) {
            const std::size_t w0 = std::size_t(std::ptrdiff_t(wo_lo) + woff);
            for (std::size_t i = 0; i < wo_hi - wo_lo; ++i) dxrow[w0 + i] += src[wo_lo + i];
          } else {
            for (std::size_t wo = wo_lo; wo < wo_hi; ++wo)
              dxrow[std::size_t(std::ptrdiff_t(wo * stride) + woff)] += src[wo];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Reverse-mode tape. Nodes own their forward value; backward() propagates
// per-call adjoints in reverse topological order and then adds them into each
// node's persistent grad, so repeated backward calls accumulate.
template <class T>
struct Node {
  Tensor<T> val;
  Tensor<T> grad;  // lazily sized on first backward
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(const Tensor<T>&, std::vector<Tensor<T>*>&)> back;
  bool from_op = false;

  void accumulate(const Tensor<T>& adj) {
    if (grad.shape.empty()) {
      grad = Tensor<T>(val.shape);
    }
    for (std::size_t i = 0; i < adj.numel(); ++i) grad.v[i] += adj.v[i];
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
inline Var<T> leaf(Tensor<T> t) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(t);
  return n;
}

template <class T>
inline Var<T> make_op(Tensor<T> val, std::vector<Var<T>> parents,
                      std::function<void(const Tensor<T>&, std::vector<Tensor<T>*>&)> back) {
  auto n = std::make_shared<Node<T>>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->back = std::move(back);
  n->from_op = true;
  return n;
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

template <class T>
inline Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a->val.shape == b->val.shape, "add: shape mismatch " + shape_str(a->val.shape) +
                                            " vs " + shape_str(b->val.shape));
  Tensor<T> out(a->val.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
  return make_op<T>(std::move(out), {a, b},
                    [](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i) {
                        pg[0]->v[i] += g.v[i];
                        pg[1]->v[i] += g.v[i];
                      }
                    });
}

template <class T>
inline Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require(a->val.shape == b->val.shape, "mul: shape mismatch");
  Tensor<T> out(a->val.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
  // closures hold the parent vars themselves; values are immutable once built
  return make_op<T>(std::move(out), {a, b},
                    [a, b](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i) {
                        pg[0]->v[i] += g.v[i] * b->val.v[i];
                        pg[1]->v[i] += g.v[i] * a->val.v[i];
                      }
                    });
}

// channel vector [C] times feature map [C,H,W]
template <class T>
inline Var<T> mul_channel(const Var<T>& vec, const Var<T>& x) {
  require(vec->val.shape.size() == 1 && x->val.shape.size() == 3 &&
              vec->val.shape[0] == x->val.shape[0],
          "mul_channel: want [C] and [C,H,W]");
  const std::size_t C = x->val.shape[0], HW = x->val.shape[1] * x->val.shape[2];
  Tensor<T> out(x->val.shape);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < HW; ++i) out.v[c * HW + i] = vec->val.v[c] * x->val.v[c * HW + i];
  return make_op<T>(std::move(out), {vec, x},
                    [vec, x, C, HW](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t c = 0; c < C; ++c) {
                        T acc = 0;
                        for (std::size_t i = 0; i < HW; ++i) {
                          acc += g.v[c * HW + i] * x->val.v[c * HW + i];
                          pg[1]->v[c * HW + i] += g.v[c * HW + i] * vec->val.v[c];
                        }
                        pg[0]->v[c] += acc;
                      }
                    });
}

template <class T>
inline Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out(x->val.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = x->val.v[i] * c;
  return make_op<T>(std::move(out), {x},
                    [c](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i) pg[0]->v[i] += g.v[i] * c;
                    });
}

template <class T>
inline Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x->val.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = x->val.v[i] > 0 ? x->val.v[i] : T(0);
  return make_op<T>(std::move(out), {x},
                    [x](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i)
                        if (x->val.v[i] > 0) pg[0]->v[i] += g.v[i];
                    });
}

template <class T>
inline Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x->val.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.v[i] = T(1) / (T(1) + std::exp(-x->val.v[i]));
  Tensor<T> ov = out;
  return make_op<T>(std::move(out), {x},
                    [ov](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i)
                        pg[0]->v[i] += g.v[i] * ov.v[i] * (T(1) - ov.v[i]);
                    });
}

// softmax along one axis, max-subtracted for stability
template <class T>
inline Var<T> softmax(const Var<T>& x, std::size_t axis) {
  require(axis < x->val.shape.size(), "softmax: bad axis");
  const auto& sh = x->val.shape;
  std::size_t len = sh[axis], inner = 1, outer = 1;
  for (std::size_t d = axis + 1; d < sh.size(); ++d) inner *= sh[d];
  for (std::size_t d = 0; d < axis; ++d) outer *= sh[d];

  Tensor<T> out(sh);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      T mx = x->val.v[o * len * inner + i];
      for (std::size_t a = 1; a < len; ++a)
        mx = std::max(mx, x->val.v[(o * len + a) * inner + i]);
      T denom = 0;
      for (std::size_t a = 0; a < len; ++a) {
        T e = std::exp(x->val.v[(o * len + a) * inner + i] - mx);
        out.v[(o * len + a) * inner + i] = e;
        denom += e;
      }
      for (std::size_t a = 0; a < len; ++a) out.v[(o * len + a) * inner + i] /= denom;
    }
  Tensor<T> ov = out;
  return make_op<T>(std::move(out), {x},
                    [ov, len, inner, outer](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t o = 0; o < outer; ++o)
                        for (std::size_t i = 0; i < inner; ++i) {
                          T dot = 0;
                          for (std::size_t a = 0; a < len; ++a) {
                            std::size_t idx = (o * len + a) * inner + i;
                            dot += g.v[idx] * ov.v[idx];
                          }
                          for (std::size_t a = 0; a < len; ++a) {
                            std::size_t idx = (o * len + a) * inner + i;
                            pg[0]->v[idx] += ov.v[idx] * (g.v[idx] - dot);
                          }
                        }
                    });
}

// selective average pooling: per-channel mean over entries >= rho; empty -> 0
template <class T>
inline Var<T> sap(const Var<T>& x, T rho) {
  require(x->val.shape.size() == 3, "sap: want [C,H,W]");
  const std::size_t C = x->val.shape[0], HW = x->val.shape[1] * x->val.shape[2];
  Tensor<T> out(Shape{C});
  std::vector<std::vector<std::size_t>> masks(C);
  for (std::size_t c = 0; c < C; ++c) {
    T acc = 0;
    for (std::size_t i = 0; i < HW; ++i)
      if (x->val.v[c * HW + i] >= rho) {
        masks[c].push_back(i);
        acc += x->val.v[c * HW + i];
      }
    out.v[c] = masks[c].empty() ? T(0) : acc / T(masks[c].size());
  }
  return make_op<T>(std::move(out), {x},
                    [masks, HW](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t c = 0; c < masks.size(); ++c) {
                        if (masks[c].empty()) continue;
                        T w = g.v[c] / T(masks[c].size());
                        for (std::size_t i : masks[c]) pg[0]->v[c * HW + i] += w;
                      }
                    });
}

// global average pool [C,H,W] -> [C]; shares sap's code path (every entry
// passes a -inf threshold) so the sap/gap degeneracy is exact by construction
template <class T>
inline Var<T> gap(const Var<T>& x) {
  require(x->val.shape.size() == 3, "gap: want [C,H,W]");
  require(x->val.shape[1] * x->val.shape[2] >= 1, "gap: empty plane");
  return sap(x, -std::numeric_limits<T>::infinity());
}

// dense layer: y = W x (+ b); x [n], W [m,n], b [m]
template <class T>
inline Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b = nullptr) {
  require(x->val.shape.size() == 1 && w->val.shape.size() == 2 &&
              w->val.shape[1] == x->val.shape[0],
          "dense: want x[n], W[m,n]");
  const std::size_t m = w->val.shape[0], n = w->val.shape[1];
  if (b) require(b->val.shape == Shape{m}, "dense: bias shape");
  Tensor<T> out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    T acc = b ? b->val.v[i] : T(0);
    for (std::size_t j = 0; j < n; ++j) acc += w->val.v[i * n + j] * x->val.v[j];
    out.v[i] = acc;
  }
  std::vector<Var<T>> parents = {x, w};
  if (b) parents.push_back(b);
  bool has_b = bool(b);
  return make_op<T>(std::move(out), std::move(parents),
                    [x, w, m, n, has_b](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < m; ++i) {
                        const T gi = g.v[i];
                        for (std::size_t j = 0; j < n; ++j) {
                          pg[0]->v[j] += w->val.v[i * n + j] * gi;
                          pg[1]->v[i * n + j] += x->val.v[j] * gi;
                        }
                        if (has_b) pg[2]->v[i] += gi;
                      }
                    });
}

// grouped 2-d cross-correlation; x [Cin,H,W], w [Cout,Cin/g,kh,kw], b [Cout]
template <class T>
inline Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::size_t groups,
                     std::size_t stride, std::size_t pad) {
  require(x->val.shape.size() == 3 && w->val.shape.size() == 4, "conv2d: want x[C,H,W], w[O,I,kh,kw]");
  const std::size_t Cin = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2];
  const std::size_t Cout = w->val.shape[0], wIn = w->val.shape[1], kh = w->val.shape[2],
                    kw = w->val.shape[3];
  require(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
          "conv2d: channels not divisible by groups");
  require(wIn == Cin / groups, "conv2d: weight input-channel mismatch");
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(H + 2 * pad >= kh && W + 2 * pad >= kw, "conv2d: kernel larger than padded input");
  if (b) require(b->val.shape == Shape{Cout}, "conv2d: bias shape");
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  const std::size_t opg = Cout / groups;  // out channels per group

  // im2col + GEMM per group: out[g] = W[g] (opg x rows) * patches (rows x cols)
  const std::size_t rows = wIn * kh * kw, cols = Ho * Wo;
  using RM = detail::RowMat<T>;

  Tensor<T> out(Shape{Cout, Ho, Wo});
  {
    std::vector<T> xc(rows * cols);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      detail::im2col(x->val.v.data(), gi * wIn, wIn, H, W, kh, kw, stride, pad, Ho, Wo,
                     xc.data());
      Eigen::Map<const RM> Wm(w->val.v.data() + gi * opg * rows, Eigen::Index(opg),
                              Eigen::Index(rows));
      Eigen::Map<const RM> Xc(xc.data(), Eigen::Index(rows), Eigen::Index(cols));
      Eigen::Map<RM> Om(out.v.data() + gi * opg * cols, Eigen::Index(opg), Eigen::Index(cols));
      Om.noalias() = Wm * Xc;
    }
    if (b)
      for (std::size_t oc = 0; oc < Cout; ++oc) {
        const T bias = b->val.v[oc];
        T* oplane = out.v.data() + oc * cols;
        for (std::size_t i = 0; i < cols; ++i) oplane[i] += bias;
      }
  }

  std::vector<Var<T>> parents = {x, w};
  if (b) parents.push_back(b);
  bool has_b = bool(b);
  auto back = [x, w, has_b, groups, H, W, wIn, kh, kw, stride, pad, Ho, Wo, opg, rows, cols](
                  const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
    std::vector<T> xc(rows * cols), dxc(rows * cols);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      detail::im2col(x->val.v.data(), gi * wIn, wIn, H, W, kh, kw, stride, pad, Ho, Wo,
                     xc.data());
      Eigen::Map<const RM> Wm(w->val.v.data() + gi * opg * rows, Eigen::Index(opg),
                              Eigen::Index(rows));
      Eigen::Map<const RM> Xc(xc.data(), Eigen::Index(rows), Eigen::Index(cols));
      Eigen::Map<const RM> Gm(g.v.data() + gi * opg * cols, Eigen::Index(opg),
                              Eigen::Index(cols));
      Eigen::Map<RM> dWm(pg[1]->v.data() + gi * opg * rows, Eigen::Index(opg),
                         Eigen::Index(rows));
      dWm.noalias() += Gm * Xc.transpose();
      Eigen::Map<RM> dXc(dxc.data(), Eigen::Index(rows), Eigen::Index(cols));
      dXc.noalias() = Wm.transpose() * Gm;
      detail::col2im_add(dxc.data(), gi * wIn, wIn, H, W, kh, kw, stride, pad, Ho, Wo,
                         pg[0]->v.data());
    }
    if (has_b)
      for (std::size_t oc = 0; oc < w->val.shape[0]; ++oc) {
        const T* gplane = g.v.data() + oc * cols;
        T acc = 0;
        for (std::size_t i = 0; i < cols; ++i) acc += gplane[i];
        pg[2]->v[oc] += acc;
      }
  };
  return make_op<T>(std::move(out), std::move(parents), std::move(back));
}

template <class T>
inline Var<T> maxpool2d(const Var<T>& x, std::size_t kernel, std::size_t stride) {
  require(x->val.shape.size() == 3, "maxpool2d: want [C,H,W]");
  require(kernel >= 1 && stride >= 1, "maxpool2d: bad kernel/stride");
  const std::size_t C = x->val.shape[0], H = x->val.shape[1], W = x->val.shape[2];
  require(H >= kernel && W >= kernel, "maxpool2d: kernel larger than input");
  const std::size_t Ho = (H - kernel) / stride + 1, Wo = (W - kernel) / stride + 1;
  Tensor<T> out(Shape{C, Ho, Wo});
  std::vector<std::size_t> arg(out.numel());
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ho = 0; ho < Ho; ++ho)
      for (std::size_t wo = 0; wo < Wo; ++wo) {
        std::size_t best = c * H * W + ho * stride * W + wo * stride;
        T bv = x->val.v[best];
        for (std::size_t u = 0; u < kernel; ++u)
          for (std::size_t v = 0; v < kernel; ++v) {
            std::size_t idx = c * H * W + (ho * stride + u) * W + (wo * stride + v);
            if (x->val.v[idx] > bv) {  // first maximum wins on ties
              bv = x->val.v[idx];
              best = idx;
            }
          }
        std::size_t oi = (c * Ho + ho) * Wo + wo;
        out.v[oi] = bv;
        arg[oi] = best;
      }
  return make_op<T>(std::move(out), {x},
                    [arg](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i) pg[0]->v[arg[i]] += g.v[i];
                    });
}

// concatenate rank-3 tensors along the channel axis
template <class T>
inline Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  require(!xs.empty(), "concat: no inputs");
  const std::size_t H = xs[0]->val.shape[1], W = xs[0]->val.shape[2];
  std::size_t C = 0;
  for (const auto& x : xs) {
    require(x->val.shape.size() == 3 && x->val.shape[1] == H && x->val.shape[2] == W,
            "concat: spatial dims disagree");
    C += x->val.shape[0];
  }
  Tensor<T> out(Shape{C, H, W});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& x : xs) {
    offsets.push_back(off);
    std::copy(x->val.v.begin(), x->val.v.end(), out.v.begin() + std::ptrdiff_t(off));
    off += x->val.numel();
  }
  std::vector<std::size_t> sizes;
  for (const auto& x : xs) sizes.push_back(x->val.numel());
  return make_op<T>(std::move(out), xs,
                    [offsets, sizes](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t p = 0; p < pg.size(); ++p)
                        for (std::size_t i = 0; i < sizes[p]; ++i)
                          pg[p]->v[i] += g.v[offsets[p] + i];
                    });
}

template <class T>
inline Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t count) {
  require(x->val.shape.size() == 3, "slice: want [C,H,W]");
  const std::size_t C = x->val.shape[0], HW = x->val.shape[1] * x->val.shape[2];
  require(begin + count <= C, "slice: channel range out of bounds");
  Tensor<T> out(Shape{count, x->val.shape[1], x->val.shape[2]});
  std::copy(x->val.v.begin() + std::ptrdiff_t(begin * HW),
            x->val.v.begin() + std::ptrdiff_t((begin + count) * HW), out.v.begin());
  return make_op<T>(std::move(out), {x},
                    [begin, HW](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < g.numel(); ++i)
                        pg[0]->v[begin * HW + i] += g.v[i];
                    });
}

// stack equal-length rank-1 tensors into [K, n]
template <class T>
inline Var<T> stack_rows(const std::vector<Var<T>>& xs) {
  require(!xs.empty(), "stack_rows: no inputs");
  const std::size_t n = xs[0]->val.numel();
  for (const auto& x : xs)
    require(x->val.shape.size() == 1 && x->val.numel() == n, "stack_rows: want equal-length vectors");
  Tensor<T> out(Shape{xs.size(), n});
  for (std::size_t k = 0; k < xs.size(); ++k)
    std::copy(xs[k]->val.v.begin(), xs[k]->val.v.end(), out.v.begin() + std::ptrdiff_t(k * n));
  return make_op<T>(std::move(out), xs,
                    [n](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t k = 0; k < pg.size(); ++k)
                        for (std::size_t i = 0; i < n; ++i) pg[k]->v[i] += g.v[k * n + i];
                    });
}

// extract row r of a rank-2 tensor as a rank-1 tensor
template <class T>
inline Var<T> row(const Var<T>& x, std::size_t r) {
  require(x->val.shape.size() == 2 && r < x->val.shape[0], "row: want rank-2, row in range");
  const std::size_t n = x->val.shape[1];
  Tensor<T> out(Shape{n});
  std::copy(x->val.v.begin() + std::ptrdiff_t(r * n), x->val.v.begin() + std::ptrdiff_t((r + 1) * n),
            out.v.begin());
  return make_op<T>(std::move(out), {x},
                    [r, n](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < n; ++i) pg[0]->v[r * n + i] += g.v[i];
                    });
}

template <class T>
inline Var<T> sum(const Var<T>& x) {
  Tensor<T> out(Shape{1});
  T acc = 0;
  for (auto v : x->val.v) acc += v;
  out.v[0] = acc;
  return make_op<T>(std::move(out), {x},
                    [](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < pg[0]->numel(); ++i) pg[0]->v[i] += g.v[0];
                    });
}

// cross entropy from logits [n] against an integer label; log-sum-exp stable
template <class T>
inline Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
  require(logits->val.shape.size() == 1, "cross_entropy: want logits[n]");
  const std::size_t n = logits->val.shape[0];
  require(label < n, "cross_entropy: label out of range");
  T mx = logits->val.v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits->val.v[i]);
  T denom = 0;
  std::vector<T> sm(n);
  for (std::size_t i = 0; i < n; ++i) {
    sm[i] = std::exp(logits->val.v[i] - mx);
    denom += sm[i];
  }
  for (std::size_t i = 0; i < n; ++i) sm[i] /= denom;
  Tensor<T> out(Shape{1});
  out.v[0] = std::log(denom) + mx - logits->val.v[label];
  return make_op<T>(std::move(out), {logits},
                    [sm, label](const Tensor<T>& g, std::vector<Tensor<T>*>& pg) {
                      for (std::size_t i = 0; i < sm.size(); ++i)
                        pg[0]->v[i] += g.v[0] * (sm[i] - (i == label ? T(1) : T(0)));
                    });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class T>
inline void backward(const Var<T>& loss) {
  require(bool(loss), "backward: null node");
  require(loss->val.numel() == 1, "backward: loss must be scalar, got " +
                                      shape_str(loss->val.shape));
  if (!loss->from_op) fail_invariant("backward: tensor is not part of a recorded graph");

  // iterative post-order DFS for reverse-topological order
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> done;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.get(), 0}};
  std::unordered_set<Node<T>*> on_stack{loss.get()};
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (!done.count(p) && !on_stack.count(p)) {
        stack.push_back({p, 0});
        on_stack.insert(p);
      }
      continue;
    }
    order.push_back(n);
    done.insert(n);
    on_stack.erase(n);
    stack.pop_back();
  }

  std::unordered_map<Node<T>*, Tensor<T>> adj;
  {
    Tensor<T> seed(Shape{1});
    seed.v[0] = T(1);
    adj.emplace(loss.get(), std::move(seed));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    auto found = adj.find(n);
    if (found == adj.end()) continue;  // not on a path to the loss
    Tensor<T>& g = found->second;
    if (n->back) {
      std::vector<Tensor<T>*> pg;
      pg.reserve(n->parents.size());
      for (auto& p : n->parents) {
        auto [pit, fresh] = adj.try_emplace(p.get(), Tensor<T>());
        if (fresh) pit->second = Tensor<T>(p->val.shape);
        pg.push_back(&pit->second);
      }
      n->back(g, pg);
    }
    n->accumulate(g);
  }
}

template <class T>
inline void zero_grad(const Var<T>& v) {
  v->grad = Tensor<T>();
}

}  // namespace sk::ad
