#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scatterkit/autodiff.hpp"
#include "scatterkit/rng.hpp"

namespace sk::ad {

// A rebuildable graph instance: `forward` re-runs the op chain against the
// leaves' *current* values, which is what central differences need.
template <class T>
struct GraphInstance {
  std::vector<Var<T>> leaves;
  std::function<Var<T>()> forward;
};

// Max relative error between analytic and central-difference gradients over
// every element of every leaf. Denominator max(1,|a|,|n|) keeps the measure
// meaningful near zero.
inline double fd_max_rel_err(const GraphInstance<double>& gi, double eps = 1e-5) {
  for (const auto& l : gi.leaves) zero_grad(l);
  backward(gi.forward());
  std::vector<Tensor<double>> analytic;
  analytic.reserve(gi.leaves.size());
  for (const auto& l : gi.leaves) {
    Tensor<double> g = l->grad.shape.empty() ? Tensor<double>(l->val.shape) : l->grad;
    analytic.push_back(std::move(g));
  }
  double worst = 0.0;
  for (std::size_t li = 0; li < gi.leaves.size(); ++li) {
    auto& leaf_val = gi.leaves[li]->val;
    for (std::size_t e = 0; e < leaf_val.numel(); ++e) {
      const double orig = leaf_val.v[e];
      leaf_val.v[e] = orig + eps;
      const double fp = gi.forward()->val.v[0];
      leaf_val.v[e] = orig - eps;
      const double fm = gi.forward()->val.v[0];
      leaf_val.v[e] = orig;
      const double num = (fp - fm) / (2.0 * eps);
      const double ana = analytic[li].v[e];
      const double rel =
          std::abs(num - ana) / std::max({1.0, std::abs(num), std::abs(ana)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// Single-precision check: the same graph (identical float-rounded inputs) is
// run in float and in double; the float analytic gradient must match the
// double one. This isolates float round-off without the noise floor a float
// finite difference would add.
inline double single_vs_double_max_rel_err(const GraphInstance<double>& gd,
                                           const GraphInstance<float>& gf) {
  for (const auto& l : gd.leaves) zero_grad(l);
  for (const auto& l : gf.leaves) zero_grad(l);
  backward(gd.forward());
  backward(gf.forward());
  require(gd.leaves.size() == gf.leaves.size(), "gradcheck: leaf count mismatch");
  double worst = 0.0;
  for (std::size_t li = 0; li < gd.leaves.size(); ++li) {
    const auto& a = gd.leaves[li]->grad;
    const auto& b = gf.leaves[li]->grad;
    const std::size_t n = gd.leaves[li]->val.numel();
    for (std::size_t e = 0; e < n; ++e) {
      const double av = a.shape.empty() ? 0.0 : a.v[e];
      const double bv = b.shape.empty() ? 0.0 : double(b.v[e]);
      const double rel = std::abs(av - bv) / std::max({1.0, std::abs(av), std::abs(bv)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// randomized per-op instances
// ---------------------------------------------------------------------------

namespace detail {

// Every drawn value is rounded through float so the float and double builds
// of the same seed evaluate the same mathematical point exactly.
template <class T>
inline T rnd(Rng& rng, double lo, double hi) {
  return static_cast<T>(static_cast<float>(rng.uniform(lo, hi)));
}

template <class T>
inline Var<T> rand_leaf(Rng& rng, Shape s, double lo = -2.0, double hi = 2.0) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.v) x = rnd<T>(rng, lo, hi);
  return leaf(std::move(t));
}

// values at least `margin` away from `center` on either side (kink avoidance)
template <class T>
inline Var<T> rand_leaf_away(Rng& rng, Shape s, double center, double margin, double span) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.v) {
    const double mag = margin + span * rng.uniform01();
    const double sgn = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    x = static_cast<T>(static_cast<float>(center + sgn * mag));
  }
  return leaf(std::move(t));
}

// pairwise-distinct values with gaps >= 2/numel (argmax-tie avoidance)
template <class T>
inline Var<T> rand_leaf_distinct(Rng& rng, Shape s) {
  Tensor<T> t(std::move(s));
  std::vector<std::size_t> order(t.numel());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < order.size(); ++i)
    t.v[i] = static_cast<T>(static_cast<float>(-1.0 + 2.0 * double(order[i]) / double(order.size())));
  return leaf(std::move(t));
}

template <class T>
GraphInstance<T> build_conv2d(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {3, 5, 5});
  auto w = rand_leaf<T>(rng, {4, 3, 3, 3}, -1.0, 1.0);
  auto b = rand_leaf<T>(rng, {4});
  auto r = rand_leaf<T>(rng, {4, 5, 5});
  return {{x, w, b, r}, [=] { return sum(mul(conv2d(x, w, b, 1, 1, 1), r)); }};
}

template <class T>
GraphInstance<T> build_conv2d_grouped(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {4, 5, 5});
  auto w = rand_leaf<T>(rng, {6, 2, 3, 3}, -1.0, 1.0);
  auto b = rand_leaf<T>(rng, {6});
  auto r = rand_leaf<T>(rng, {6, 5, 5});
  return {{x, w, b, r}, [=] { return sum(mul(conv2d(x, w, b, 2, 1, 1), r)); }};
}

template <class T>
GraphInstance<T> build_conv2d_strided(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {2, 7, 7});
  auto w = rand_leaf<T>(rng, {3, 2, 5, 5}, -1.0, 1.0);
  auto r = rand_leaf<T>(rng, {3, 4, 4});
  return {{x, w, r}, [=] { return sum(mul(conv2d(x, w, Var<T>(), 1, 2, 2), r)); }};
}

template <class T>
GraphInstance<T> build_dense(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {7});
  auto w = rand_leaf<T>(rng, {4, 7}, -1.0, 1.0);
  auto b = rand_leaf<T>(rng, {4});
  auto r = rand_leaf<T>(rng, {4});
  return {{x, w, b, r}, [=] { return sum(mul(dense(x, w, b), r)); }};
}

template <class T>
GraphInstance<T> build_gap(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {3, 4, 4});
  auto r = rand_leaf<T>(rng, {3});
  return {{x, r}, [=] { return sum(mul(gap(x), r)); }};
}

template <class T>
GraphInstance<T> build_sap(std::uint64_t seed) {
  Rng rng(seed);
  const T rho = T(0.3f);
  auto x = rand_leaf_away<T>(rng, {2, 4, 4}, 0.3, 0.05, 1.0);
  auto r = rand_leaf<T>(rng, {2});
  return {{x, r}, [=] { return sum(mul(sap(x, rho), r)); }};
}

template <class T>
GraphInstance<T> build_relu(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf_away<T>(rng, {3, 4, 4}, 0.0, 0.1, 1.9);
  auto r = rand_leaf<T>(rng, {3, 4, 4});
  return {{x, r}, [=] { return sum(mul(relu(x), r)); }};
}

template <class T>
GraphInstance<T> build_sigmoid(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {2, 3, 3});
  auto r = rand_leaf<T>(rng, {2, 3, 3});
  return {{x, r}, [=] { return sum(mul(sigmoid(x), r)); }};
}

template <class T>
GraphInstance<T> build_softmax_axis0(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {4, 6});
  auto r = rand_leaf<T>(rng, {4, 6});
  return {{x, r}, [=] { return sum(mul(softmax(x, 0), r)); }};
}

template <class T>
GraphInstance<T> build_softmax_axis1(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {4, 6});
  auto r = rand_leaf<T>(rng, {4, 6});
  return {{x, r}, [=] { return sum(mul(softmax(x, 1), r)); }};
}

template <class T>
GraphInstance<T> build_add(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {2, 3, 3});
  auto y = rand_leaf<T>(rng, {2, 3, 3});
  auto r = rand_leaf<T>(rng, {2, 3, 3});
  return {{x, y, r}, [=] { return sum(mul(add(x, y), r)); }};
}

template <class T>
GraphInstance<T> build_mul(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {2, 3, 3});
  auto y = rand_leaf<T>(rng, {2, 3, 3});
  return {{x, y}, [=] { return sum(mul(x, y)); }};
}

template <class T>
GraphInstance<T> build_mul_channel(std::uint64_t seed) {
  Rng rng(seed);
  auto v = rand_leaf<T>(rng, {3});
  auto x = rand_leaf<T>(rng, {3, 4, 4});
  auto r = rand_leaf<T>(rng, {3, 4, 4});
  return {{v, x, r}, [=] { return sum(mul(mul_channel(v, x), r)); }};
}

template <class T>
GraphInstance<T> build_scale(std::uint64_t seed) {
  Rng rng(seed);
  const T c = rnd<T>(rng, 0.5, 2.0);
  auto x = rand_leaf<T>(rng, {2, 3, 3});
  auto r = rand_leaf<T>(rng, {2, 3, 3});
  return {{x, r}, [=] { return sum(mul(scale(x, c), r)); }};
}

template <class T>
GraphInstance<T> build_concat(std::uint64_t seed) {
  Rng rng(seed);
  auto a = rand_leaf<T>(rng, {2, 3, 3});
  auto b = rand_leaf<T>(rng, {1, 3, 3});
  auto c = rand_leaf<T>(rng, {3, 3, 3});
  auto r = rand_leaf<T>(rng, {6, 3, 3});
  return {{a, b, c, r},
          [=] { return sum(mul(concat_channels<T>({a, b, c}), r)); }};
}

template <class T>
GraphInstance<T> build_slice(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {5, 3, 3});
  auto r = rand_leaf<T>(rng, {3, 3, 3});
  return {{x, r}, [=] { return sum(mul(slice_channels(x, 1, 3), r)); }};
}

template <class T>
GraphInstance<T> build_maxpool2d(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf_distinct<T>(rng, {2, 6, 6});
  auto r = rand_leaf<T>(rng, {2, 3, 3});
  return {{x, r}, [=] { return sum(mul(maxpool2d(x, 2, 2), r)); }};
}

template <class T>
GraphInstance<T> build_sum(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {3, 4});
  return {{x}, [=] { return sum(x); }};
}

template <class T>
GraphInstance<T> build_cross_entropy(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {8});
  const std::size_t label = seed % 8;
  return {{x}, [=] { return cross_entropy(x, label); }};
}

template <class T>
GraphInstance<T> build_stack_rows_row(std::uint64_t seed) {
  Rng rng(seed);
  auto a = rand_leaf<T>(rng, {5});
  auto b = rand_leaf<T>(rng, {5});
  auto c = rand_leaf<T>(rng, {5});
  auto r0 = rand_leaf<T>(rng, {5});
  auto r1 = rand_leaf<T>(rng, {5});
  return {{a, b, c, r0, r1}, [=] {
            auto s = softmax(stack_rows<T>({a, b, c}), 0);
            return sum(add(mul(row(s, 0), r0), mul(row(s, 2), r1)));
          }};
}

// reuses one leaf in two branches; exercises adjoint accumulation on fan-out
template <class T>
GraphInstance<T> build_shared_input(std::uint64_t seed) {
  Rng rng(seed);
  auto x = rand_leaf<T>(rng, {2, 3, 3});
  return {{x}, [=] { return sum(add(mul(x, x), scale(x, T(0.5f)))); }};
}

}  // namespace detail

struct OpCheck {
  std::string name;
  std::function<GraphInstance<double>(std::uint64_t)> build_d;
  std::function<GraphInstance<float>(std::uint64_t)> build_f;
};

inline const std::vector<OpCheck>& op_checks() {
  static const std::vector<OpCheck> checks = {
      {"conv2d", detail::build_conv2d<double>, detail::build_conv2d<float>},
      {"conv2d_grouped", detail::build_conv2d_grouped<double>, detail::build_conv2d_grouped<float>},
      {"conv2d_strided", detail::build_conv2d_strided<double>, detail::build_conv2d_strided<float>},
      {"dense", detail::build_dense<double>, detail::build_dense<float>},
      {"gap", detail::build_gap<double>, detail::build_gap<float>},
      {"sap", detail::build_sap<double>, detail::build_sap<float>},
      {"relu", detail::build_relu<double>, detail::build_relu<float>},
      {"sigmoid", detail::build_sigmoid<double>, detail::build_sigmoid<float>},
      {"softmax_axis0", detail::build_softmax_axis0<double>, detail::build_softmax_axis0<float>},
      {"softmax_axis1", detail::build_softmax_axis1<double>, detail::build_softmax_axis1<float>},
      {"add", detail::build_add<double>, detail::build_add<float>},
      {"mul", detail::build_mul<double>, detail::build_mul<float>},
      {"mul_channel", detail::build_mul_channel<double>, detail::build_mul_channel<float>},
      {"scale", detail::build_scale<double>, detail::build_scale<float>},
      {"concat", detail::build_concat<double>, detail::build_concat<float>},
      {"slice", detail::build_slice<double>, detail::build_slice<float>},
      {"maxpool2d", detail::build_maxpool2d<double>, detail::build_maxpool2d<float>},
      {"stack_rows_row", detail::build_stack_rows_row<double>, detail::build_stack_rows_row<float>},
      {"sum", detail::build_sum<double>, detail::build_sum<float>},
      {"cross_entropy", detail::build_cross_entropy<double>, detail::build_cross_entropy<float>},
      {"shared_input", detail::build_shared_input<double>, detail::build_shared_input<float>},
  };
  return checks;
}

}  // namespace sk::ad
