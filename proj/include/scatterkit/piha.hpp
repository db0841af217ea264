#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "scatterkit/autodiff.hpp"
#include "scatterkit/common.hpp"
#include "scatterkit/io.hpp"
#include "scatterkit/rng.hpp"
#include "scatterkit/tensor.hpp"

namespace sk::piha {

// Hybrid attention block: a data-driven SE branch over all C channels plus a
// physics-driven branch that binds each of K component maps to its channel
// block, pools it selectively, and re-weights the blocks — either through a
// K-way softmax across groups (PIR) or by a fixed scale in ablation mode.
struct PihaConfig {
  std::size_t channels = 64;       // C
  std::size_t groups = 4;          // K
  std::size_t se_reduction = 16;   // bottleneck ratio of the main SE
  std::size_t sse_reduction = 4;   // bottleneck ratio of the shared SSE
  double sap_threshold = 0.05;     // rho
  std::size_t pam_kernel = 3;      // Conv_k spatial size (odd, 'same' padding)
  bool se_enabled = true;          // false -> identity data-driven branch
  bool pir_enabled = true;
  std::optional<double> fixed_pase_scale;  // ablation: scales the SSE output

  std::size_t group_channels() const { return channels / groups; }
  std::size_t se_hidden() const { return std::max<std::size_t>(1, channels / se_reduction); }
  std::size_t sse_hidden() const {
    return std::max<std::size_t>(1, group_channels() / sse_reduction);
  }

  void validate() const {
    require(channels >= 1 && groups >= 1, "piha: channels and groups must be positive");
    require(channels % groups == 0, "piha: channels must divide evenly into groups");
    require(se_reduction >= 1 && sse_reduction >= 1, "piha: reduction ratios must be positive");
    require(std::isfinite(sap_threshold), "piha: sap threshold must be finite");
    require(pam_kernel >= 1 && pam_kernel % 2 == 1, "piha: pam kernel must be odd");
    require(pir_enabled != fixed_pase_scale.has_value(),
            "piha: exactly one of pir / fixed scale must be active");
    if (fixed_pase_scale) require(std::isfinite(*fixed_pase_scale), "piha: fixed scale must be finite");
  }
};

// Learnable state. SE and SSE bottlenecks are bias-free two-layer MLPs; the
// per-group PAM convs carry a bias. SSE weights are shared across groups.
template <class T>
struct PihaState {
  Tensor<T> w0;      // [C/r, C]
  Tensor<T> w1;      // [C, C/r]
  Tensor<T> sse_w0;  // [(C/K)/r', C/K]
  Tensor<T> sse_w1;  // [C/K, (C/K)/r']
  std::vector<Tensor<T>> pam_w;  // K of [C/K, 1, k, k]
  std::vector<Tensor<T>> pam_b;  // K of [C/K]

  std::vector<Tensor<T>*> params() {
    std::vector<Tensor<T>*> p{&w0, &w1, &sse_w0, &sse_w1};
    for (auto& w : pam_w) p.push_back(&w);
    for (auto& b : pam_b) p.push_back(&b);
    return p;
  }
};

namespace detail {

template <class T>
inline void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(std::max<std::size_t>(1, fan_in)));
  for (auto& x : t.v) x = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace detail

template <class T>
inline PihaState<T> init_piha_state(const PihaConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t C = cfg.channels, n = cfg.group_channels();
  PihaState<T> st;
  st.w0 = Tensor<T>(Shape{cfg.se_hidden(), C});
  st.w1 = Tensor<T>(Shape{C, cfg.se_hidden()});
  st.sse_w0 = Tensor<T>(Shape{cfg.sse_hidden(), n});
  st.sse_w1 = Tensor<T>(Shape{n, cfg.sse_hidden()});
  detail::kaiming_uniform(st.w0, C, rng);
  detail::kaiming_uniform(st.w1, cfg.se_hidden(), rng);
  detail::kaiming_uniform(st.sse_w0, n, rng);
  detail::kaiming_uniform(st.sse_w1, cfg.sse_hidden(), rng);
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    Tensor<T> w(Shape{n, 1, cfg.pam_kernel, cfg.pam_kernel});
    detail::kaiming_uniform(w, cfg.pam_kernel * cfg.pam_kernel, rng);
    st.pam_w.push_back(std::move(w));
    st.pam_b.emplace_back(Shape{n});  // biases start at zero
  }
  return st;
}

// Tape-side handles on the state; one set per recorded graph.
template <class T>
struct PihaVars {
  ad::Var<T> w0, w1, sse_w0, sse_w1;
  std::vector<ad::Var<T>> pam_w, pam_b;

  std::vector<ad::Var<T>> all() const {
    std::vector<ad::Var<T>> v{w0, w1, sse_w0, sse_w1};
    v.insert(v.end(), pam_w.begin(), pam_w.end());
    v.insert(v.end(), pam_b.begin(), pam_b.end());
    return v;
  }
};

template <class T>
inline PihaVars<T> lift(const PihaState<T>& st) {
  PihaVars<T> v;
  v.w0 = ad::leaf(st.w0);
  v.w1 = ad::leaf(st.w1);
  v.sse_w0 = ad::leaf(st.sse_w0);
  v.sse_w1 = ad::leaf(st.sse_w1);
  for (const auto& w : st.pam_w) v.pam_w.push_back(ad::leaf(w));
  for (const auto& b : st.pam_b) v.pam_b.push_back(ad::leaf(b));
  return v;
}

// Resample chip-resolution component maps to the insertion point's H x W and
// lift them as [1,H,W] graph leaves.
template <class T>
inline std::vector<ad::Var<T>> lift_components(const std::vector<Tensor<double>>& maps,
                                               std::size_t H, std::size_t W) {
  std::vector<ad::Var<T>> out;
  out.reserve(maps.size());
  for (const auto& m : maps) {
    require(m.shape.size() == 2, "piha: component maps must be rank-2");
    Tensor<double> r = bilinear_resize2d(m, H, W);
    Tensor<T> t(Shape{1, H, W});
    for (std::size_t i = 0; i < r.numel(); ++i) t.v[i] = static_cast<T>(r.v[i]);
    out.push_back(ad::leaf(std::move(t)));
  }
  return out;
}

template <class T>
struct SeOut {
  ad::Var<T> d_out;
  ad::Var<T> d_attn;  // [C]; all-ones when the branch is disabled
};

template <class T>
inline SeOut<T> se_forward(const ad::Var<T>& f, const PihaVars<T>& vars, const PihaConfig& cfg) {
  require(f->val.shape.size() == 3 && f->val.shape[0] == cfg.channels,
          "piha: feature map channel count mismatch");
  if (!cfg.se_enabled) {
    return {f, ad::leaf(Tensor<T>(Shape{cfg.channels}, T(1)))};
  }
  auto z = ad::gap(f);
  auto attn = ad::sigmoid(ad::dense(ad::relu(ad::dense(z, vars.w0)), vars.w1));
  return {ad::mul_channel(attn, f), attn};
}

// P_k = Conv_k(M_k) elementwise F_k, for each of the K contiguous channel blocks.
template <class T>
inline std::vector<ad::Var<T>> pam_forward(const ad::Var<T>& f,
                                           const std::vector<ad::Var<T>>& comps,
                                           const PihaVars<T>& vars, const PihaConfig& cfg) {
  require(comps.size() == cfg.groups,
          "piha: component count " + std::to_string(comps.size()) + " != groups " +
              std::to_string(cfg.groups));
  const std::size_t n = cfg.group_channels(), pad = cfg.pam_kernel / 2;
  std::vector<ad::Var<T>> p;
  p.reserve(cfg.groups);
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    require(comps[k]->val.shape == Shape{1, f->val.shape[1], f->val.shape[2]},
            "piha: component map not resampled to feature size");
    auto m_bar = ad::conv2d(comps[k], vars.pam_w[k], vars.pam_b[k], 1, 1, pad);
    auto f_k = ad::slice_channels(f, k * n, n);
    p.push_back(ad::mul(m_bar, f_k));
  }
  return p;
}

// Pattn_k = sigmoid(W1' relu(W0' sap(P_k))), shared weights across groups.
template <class T>
inline std::vector<ad::Var<T>> sse_forward(const std::vector<ad::Var<T>>& p,
                                           const PihaVars<T>& vars, const PihaConfig& cfg) {
  std::vector<ad::Var<T>> attn;
  attn.reserve(p.size());
  for (const auto& pk : p) {
    auto pooled = ad::sap(pk, T(cfg.sap_threshold));
    attn.push_back(ad::sigmoid(ad::dense(ad::relu(ad::dense(pooled, vars.sse_w0)), vars.sse_w1)));
  }
  return attn;
}

// K-way softmax across groups at each channel index.
template <class T>
inline std::vector<ad::Var<T>> pir(const std::vector<ad::Var<T>>& pattn) {
  require(!pattn.empty(), "piha: pir needs at least one group");
  auto s = ad::softmax(ad::stack_rows(pattn), 0);
  std::vector<ad::Var<T>> out;
  out.reserve(pattn.size());
  for (std::size_t k = 0; k < pattn.size(); ++k) out.push_back(ad::row(s, k));
  return out;
}

template <class T>
struct PihaOut {
  ad::Var<T> f_piha;
  ad::Var<T> d_attn;                 // [C]
  std::vector<ad::Var<T>> patt_bar;  // K of [C/K]
};

template <class T>
inline PihaOut<T> piha_forward(const ad::Var<T>& f, const std::vector<ad::Var<T>>& comps,
                               const PihaVars<T>& vars, const PihaConfig& cfg) {
  cfg.validate();
  auto se = se_forward(f, vars, cfg);
  auto p = pam_forward(f, comps, vars, cfg);
  auto pattn = sse_forward(p, vars, cfg);
  std::vector<ad::Var<T>> patt_bar;
  if (cfg.pir_enabled) {
    patt_bar = pir(pattn);
  } else {
    patt_bar.reserve(pattn.size());
    for (const auto& a : pattn) patt_bar.push_back(ad::scale(a, T(*cfg.fixed_pase_scale)));
  }
  std::vector<ad::Var<T>> p_out;
  p_out.reserve(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) p_out.push_back(ad::mul_channel(patt_bar[k], p[k]));
  auto fused = ad::add(se.d_out, ad::concat_channels(p_out));
  return {fused, se.d_attn, std::move(patt_bar)};
}

// Convenience wrapper for inference / attention dumps: plain tensors in and out.
template <class T>
struct PihaEval {
  Tensor<T> f_piha;
  Tensor<T> d_attn;
  std::vector<Tensor<T>> patt_bar;
};

template <class T>
inline PihaEval<T> piha_eval(const Tensor<T>& f, const std::vector<Tensor<double>>& comp_maps,
                             const PihaState<T>& state, const PihaConfig& cfg) {
  require(f.shape.size() == 3, "piha: want [C,H,W]");
  auto vars = lift(state);
  auto comps = lift_components<T>(comp_maps, f.shape[1], f.shape[2]);
  auto out = piha_forward(ad::leaf(f), comps, vars, cfg);
  PihaEval<T> e;
  e.f_piha = out.f_piha->val;
  e.d_attn = out.d_attn->val;
  for (const auto& v : out.patt_bar) e.patt_bar.push_back(v->val);
  return e;
}

// One CSV row per attention weight: data-driven rows use group -1, physics
// rows carry their group index and intra-group channel.
template <class T>
inline void append_attention_rows(CsvWriter& csv, const std::string& sample_id,
                                  double azimuth_deg, const Tensor<T>& d_attn,
                                  const std::vector<Tensor<T>>& patt_bar) {
  for (std::size_t c = 0; c < d_attn.numel(); ++c) {
    csv.field(sample_id);
    csv.field(azimuth_deg);
    csv.field(std::string("se"));
    csv.field(std::int64_t(-1));
    csv.field(std::int64_t(c));
    csv.field(double(d_attn.v[c]));
    csv.endrow();
  }
  for (std::size_t k = 0; k < patt_bar.size(); ++k)
    for (std::size_t c = 0; c < patt_bar[k].numel(); ++c) {
      csv.field(sample_id);
      csv.field(azimuth_deg);
      csv.field(std::string("pase"));
      csv.field(std::int64_t(k));
      csv.field(std::int64_t(c));
      csv.field(double(patt_bar[k].v[c]));
      csv.endrow();
    }
}

inline const char* attention_csv_header() {
  return "sample_id,azimuth_deg,branch,group,channel,weight";
}

}  // namespace sk::piha
