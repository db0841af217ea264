#pragma once

// Shared gradient-check suite: every primitive op plus the composed
// physics-attention block at a representative size, rebuilt over several
// random instances. The CLI and the verification binary both drive this.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "scatterkit/gradcheck.hpp"
#include "scatterkit/piha.hpp"

namespace sk::ad {

struct ComposedSpec {
  std::size_t channels = 16;
  std::size_t groups = 4;
  std::size_t hw = 8;
  bool pir = true;
};

namespace detail {

template <class T>
struct ComposedGraph {
  GraphInstance<T> gi;
  Var<T> f;
  piha::PihaVars<T> vars;
  std::vector<Var<T>> comps;
  piha::PihaConfig cfg;
};

// Full block forward as a rebuildable graph over every learnable leaf plus
// the input, the component maps and a random projection to a scalar.
template <class T>
inline ComposedGraph<T> build_composed(std::uint64_t seed, const ComposedSpec& sp) {
  Rng rng(seed);
  ComposedGraph<T> g;
  g.cfg.channels = sp.channels;
  g.cfg.groups = sp.groups;
  g.cfg.se_reduction = 4;
  g.cfg.sse_reduction = 2;
  if (!sp.pir) {
    g.cfg.pir_enabled = false;
    g.cfg.fixed_pase_scale = 0.25;
  }
  g.cfg.validate();
  const std::size_t H = sp.hw, W = sp.hw, n = g.cfg.group_channels();
  g.f = rand_leaf<T>(rng, {g.cfg.channels, H, W});
  g.vars.w0 = rand_leaf<T>(rng, {g.cfg.se_hidden(), g.cfg.channels}, -0.7, 0.7);
  g.vars.w1 = rand_leaf<T>(rng, {g.cfg.channels, g.cfg.se_hidden()}, -0.7, 0.7);
  g.vars.sse_w0 = rand_leaf<T>(rng, {g.cfg.sse_hidden(), n}, -0.7, 0.7);
  g.vars.sse_w1 = rand_leaf<T>(rng, {n, g.cfg.sse_hidden()}, -0.7, 0.7);
  for (std::size_t k = 0; k < g.cfg.groups; ++k) {
    g.vars.pam_w.push_back(
        rand_leaf<T>(rng, {n, 1, g.cfg.pam_kernel, g.cfg.pam_kernel}, -0.7, 0.7));
    g.vars.pam_b.push_back(rand_leaf<T>(rng, {n}, -0.3, 0.3));
    g.comps.push_back(rand_leaf<T>(rng, {1, H, W}, 0.0, 1.0));
  }
  auto r = rand_leaf<T>(rng, {g.cfg.channels, H, W});
  std::vector<Var<T>> leaves{g.f, g.vars.w0, g.vars.w1, g.vars.sse_w0, g.vars.sse_w1};
  for (auto& w : g.vars.pam_w) leaves.push_back(w);
  for (auto& b : g.vars.pam_b) leaves.push_back(b);
  for (auto& m : g.comps) leaves.push_back(m);
  leaves.push_back(r);
  auto f = g.f;
  auto comps = g.comps;
  auto vars = g.vars;
  auto cfg = g.cfg;
  g.gi = {std::move(leaves),
          [=] { return sum(mul(piha::piha_forward(f, comps, vars, cfg).f_piha, r)); }};
  return g;
}

// Finite differences need a point where the instance is locally smooth:
// every relu pre-activation away from zero, every attention-map value away
// from the soft-pool threshold, and at least one live hidden unit per group.
inline bool composed_smooth(const ComposedGraph<double>& g, double guard = 1e-3) {
  auto h = dense(gap(g.f), g.vars.w0);
  for (double v : h->val.v)
    if (std::abs(v) < guard) return false;
  auto p = piha::pam_forward(g.f, g.comps, g.vars, g.cfg);
  for (const auto& pk : p) {
    for (double v : pk->val.v)
      if (std::abs(v - g.cfg.sap_threshold) < guard) return false;
    auto hidden = dense(sap(pk, g.cfg.sap_threshold), g.vars.sse_w0);
    bool alive = false;
    for (double v : hidden->val.v) {
      if (std::abs(v) < guard) return false;
      alive = alive || v > 0.0;
    }
    if (!alive) return false;
  }
  return true;
}

}  // namespace detail

inline std::uint64_t composed_smooth_seed(std::uint64_t from, const ComposedSpec& sp) {
  for (std::uint64_t s = from;; ++s)
    if (detail::composed_smooth(detail::build_composed<double>(s, sp))) return s;
}

struct CheckResult {
  std::string name;
  double worst = 0.0;
};

// `instances` instances per entry. Double mode measures analytic against
// central differences; single mode measures the float analytic gradient
// against the double one on identical inputs.
inline std::vector<CheckResult> run_gradcheck_suite(std::size_t instances,
                                                    bool single_precision) {
  require(instances >= 1, "gradcheck: need at least one instance");
  std::vector<CheckResult> out;
  for (const auto& oc : op_checks()) {
    CheckResult r{oc.name, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
      const std::uint64_t seed = 101 + 17 * i;
      r.worst = std::max(r.worst, single_precision
                                      ? single_vs_double_max_rel_err(oc.build_d(seed),
                                                                     oc.build_f(seed))
                                      : fd_max_rel_err(oc.build_d(seed)));
    }
    out.push_back(std::move(r));
  }
  for (bool pir : {true, false}) {
    ComposedSpec sp;
    sp.pir = pir;
    CheckResult r{pir ? "piha_block" : "piha_block_fixed_scale", 0.0};
    std::uint64_t seed = 9000;
    for (std::size_t i = 0; i < instances; ++i) {
      seed = composed_smooth_seed(seed + 1, sp);
      r.worst =
          std::max(r.worst, single_precision
                                ? single_vs_double_max_rel_err(
                                      detail::build_composed<double>(seed, sp).gi,
                                      detail::build_composed<float>(seed, sp).gi)
                                : fd_max_rel_err(detail::build_composed<double>(seed, sp).gi));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline double suite_worst(const std::vector<CheckResult>& results) {
  double w = 0.0;
  for (const auto& r : results) w = std::max(w, r.worst);
  return w;
}

}  // namespace sk::ad
