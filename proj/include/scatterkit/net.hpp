#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scatterkit/autodiff.hpp"
#include "scatterkit/common.hpp"
#include "scatterkit/io.hpp"
#include "scatterkit/piha.hpp"
#include "scatterkit/rng.hpp"
#include "scatterkit/tensor.hpp"
#include "scatterkit/threads.hpp"

namespace sk::net {

// Shallow four-stage CNN with optional attention blocks after pooling stages.
struct BackboneConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64, 128};
  std::size_t first_kernel = 5;   // stage 0
  std::size_t later_kernel = 3;   // stages 1+
  std::size_t pool = 2;           // maxpool kernel = stride per stage
  std::vector<std::size_t> piha_after_stage{0, 1, 2, 3};  // empty = plain baseline
  std::size_t groups = 4;  // K of every inserted attention block
  std::size_t se_reduction = 16;
  std::size_t sse_reduction = 4;
  double sap_threshold = 0.05;
  std::size_t pam_kernel = 3;
  bool se_enabled = true;
  bool pir_enabled = true;
  std::optional<double> fixed_pase_scale;
  std::size_t n_classes = 8;
  std::size_t input_hw = 32;  // square single-channel input

  bool has_piha(std::size_t stage) const {
    return std::find(piha_after_stage.begin(), piha_after_stage.end(), stage) !=
           piha_after_stage.end();
  }

  piha::PihaConfig piha_cfg(std::size_t stage) const {
    piha::PihaConfig p;
    p.channels = stage_channels.at(stage);
    p.groups = groups;
    p.se_reduction = se_reduction;
    p.sse_reduction = sse_reduction;
    p.sap_threshold = sap_threshold;
    p.pam_kernel = pam_kernel;
    p.se_enabled = se_enabled;
    p.pir_enabled = pir_enabled;
    p.fixed_pase_scale = fixed_pase_scale;
    return p;
  }

  void validate() const {
    require(!stage_channels.empty(), "net: need at least one stage");
    require(n_classes >= 2, "net: need at least two classes");
    require(first_kernel % 2 == 1 && later_kernel % 2 == 1, "net: kernels must be odd");
    require(pool >= 1, "net: pool must be positive");
    std::size_t hw = input_hw;
    for (std::size_t s = 0; s < stage_channels.size(); ++s) {
      require(stage_channels[s] >= 1, "net: empty stage");
      require(hw >= pool, "net: input too small for stage " + std::to_string(s));
      hw /= pool;
      if (has_piha(s)) piha_cfg(s).validate();
    }
    for (auto s : piha_after_stage)
      require(s < stage_channels.size(), "net: attention stage index out of range");
  }
};

template <class T>
struct NetState {
  std::vector<Tensor<T>> conv_w, conv_b;          // per stage
  std::vector<piha::PihaState<T>> piha;           // one per piha_after_stage entry
  Tensor<T> head_w, head_b;

  // Stable name -> tensor enumeration; the order defines optimizer slot and
  // checkpoint layout.
  std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t s = 0; s < conv_w.size(); ++s) {
      out.emplace_back("stage" + std::to_string(s) + ".conv.w", &conv_w[s]);
      out.emplace_back("stage" + std::to_string(s) + ".conv.b", &conv_b[s]);
    }
    for (std::size_t i = 0; i < piha.size(); ++i) {
      const std::string p = "piha" + std::to_string(i) + ".";
      out.emplace_back(p + "w0", &piha[i].w0);
      out.emplace_back(p + "w1", &piha[i].w1);
      out.emplace_back(p + "sse_w0", &piha[i].sse_w0);
      out.emplace_back(p + "sse_w1", &piha[i].sse_w1);
      for (std::size_t k = 0; k < piha[i].pam_w.size(); ++k) {
        out.emplace_back(p + "pam" + std::to_string(k) + ".w", &piha[i].pam_w[k]);
        out.emplace_back(p + "pam" + std::to_string(k) + ".b", &piha[i].pam_b[k]);
      }
    }
    out.emplace_back("head.w", &head_w);
    out.emplace_back("head.b", &head_b);
    return out;
  }
};

template <class T>
inline NetState<T> init_net(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  NetState<T> st;
  // Attention draws fork off the stream, so two configs that differ only in
  // insertion points share every backbone draw (paired ablations).
  Rng attn_rng = Rng::child(rng.next_u64(), 0xA77);
  std::size_t cin = 1;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const std::size_t cout = cfg.stage_channels[s];
    const std::size_t k = s == 0 ? cfg.first_kernel : cfg.later_kernel;
    Tensor<T> w(Shape{cout, cin, k, k});
    piha::detail::kaiming_uniform(w, cin * k * k, rng);
    st.conv_w.push_back(std::move(w));
    st.conv_b.emplace_back(Shape{cout});
    cin = cout;
  }
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s)
    if (cfg.has_piha(s)) st.piha.push_back(piha::init_piha_state<T>(cfg.piha_cfg(s), attn_rng));
  st.head_w = Tensor<T>(Shape{cfg.n_classes, cfg.stage_channels.back()});
  piha::detail::kaiming_uniform(st.head_w, cfg.stage_channels.back(), rng);
  st.head_b = Tensor<T>(Shape{cfg.n_classes});
  return st;
}

template <class T>
struct NetVars {
  std::vector<ad::Var<T>> conv_w, conv_b;
  std::vector<piha::PihaVars<T>> piha;
  ad::Var<T> head_w, head_b;

  // same order as NetState::named_params
  std::vector<ad::Var<T>> all() const {
    std::vector<ad::Var<T>> v;
    for (std::size_t s = 0; s < conv_w.size(); ++s) {
      v.push_back(conv_w[s]);
      v.push_back(conv_b[s]);
    }
    for (const auto& p : piha) {
      v.push_back(p.w0);
      v.push_back(p.w1);
      v.push_back(p.sse_w0);
      v.push_back(p.sse_w1);
      for (std::size_t k = 0; k < p.pam_w.size(); ++k) {
        v.push_back(p.pam_w[k]);
        v.push_back(p.pam_b[k]);
      }
    }
    v.push_back(head_w);
    v.push_back(head_b);
    return v;
  }
};

template <class T>
inline NetVars<T> lift(const NetState<T>& st) {
  NetVars<T> v;
  for (const auto& w : st.conv_w) v.conv_w.push_back(ad::leaf(w));
  for (const auto& b : st.conv_b) v.conv_b.push_back(ad::leaf(b));
  for (const auto& p : st.piha) v.piha.push_back(piha::lift(p));
  v.head_w = ad::leaf(st.head_w);
  v.head_b = ad::leaf(st.head_b);
  return v;
}

// One chip ready for the network: normalized image, its K component maps at
// chip resolution, and bookkeeping for reports.
template <class T>
struct Sample {
  Tensor<T> chip;                     // [H, W]
  std::vector<Tensor<double>> comps;  // K rank-2 maps
  std::size_t label = 0;
  double azimuth_deg = 0.0;
  std::string id;
};

// attention weights of one inserted block, recorded during a forward pass
template <class T>
struct StageAttention {
  std::size_t stage = 0;
  Tensor<T> d_attn;                 // data-driven channel weights [C]
  std::vector<Tensor<T>> patt_bar;  // physics weights, K of [C/K]
};

template <class T>
inline ad::Var<T> net_forward(const ad::Var<T>& input, const std::vector<Tensor<double>>& comps,
                              const NetVars<T>& vars, const BackboneConfig& cfg,
                              std::vector<StageAttention<T>>* attn = nullptr) {
  require(input->val.shape == Shape{1, cfg.input_hw, cfg.input_hw},
          "net: input resolution mismatch, want " + std::to_string(cfg.input_hw) + "x" +
              std::to_string(cfg.input_hw));
  ad::Var<T> x = input;
  std::size_t piha_idx = 0;
  for (std::size_t s = 0; s < cfg.stage_channels.size(); ++s) {
    const std::size_t k = s == 0 ? cfg.first_kernel : cfg.later_kernel;
    x = ad::relu(ad::conv2d(x, vars.conv_w[s], vars.conv_b[s], 1, 1, k / 2));
    x = ad::maxpool2d(x, cfg.pool, cfg.pool);
    if (cfg.has_piha(s)) {
      auto pcfg = cfg.piha_cfg(s);
      auto lifted = piha::lift_components<T>(comps, x->val.shape[1], x->val.shape[2]);
      auto out = piha::piha_forward(x, lifted, vars.piha[piha_idx++], pcfg);
      if (attn) {
        StageAttention<T> rec;
        rec.stage = s;
        rec.d_attn = out.d_attn->val;
        for (const auto& p : out.patt_bar) rec.patt_bar.push_back(p->val);
        attn->push_back(std::move(rec));
      }
      x = out.f_piha;
    }
  }
  return ad::dense(ad::gap(x), vars.head_w, vars.head_b);
}

// forward one sample, returning softmax scores plus every recorded attention
template <class T>
struct AttnPrediction {
  Tensor<T> scores;  // [n_classes]
  std::vector<StageAttention<T>> attn;
};

template <class T>
inline AttnPrediction<T> predict_with_attention(const NetState<T>& st, const BackboneConfig& cfg,
                                                const Sample<T>& s) {
  cfg.validate();
  auto vars = lift(st);
  Tensor<T> x(Shape{1, s.chip.shape[0], s.chip.shape[1]});
  x.v = s.chip.v;
  AttnPrediction<T> out;
  auto logits = net_forward(ad::leaf(std::move(x)), s.comps, vars, cfg, &out.attn);
  out.scores = ad::softmax(logits, 0)->val;
  return out;
}

// softmax class scores, batch order preserved; batch-parallel with
// chunk-ordered writes so results are thread-count independent
template <class T>
inline Tensor<T> predict_scores(const NetState<T>& st, const BackboneConfig& cfg,
                                const std::vector<Sample<T>>& batch, int n_threads = 0) {
  cfg.validate();
  if (n_threads <= 0) n_threads = default_threads();
  Tensor<T> scores(Shape{batch.size(), cfg.n_classes});
  auto vars = lift(st);  // shared read-only across workers
  parallel_chunks(batch.size(), 4, n_threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& s = batch[i];
      Tensor<T> x(Shape{1, s.chip.shape[0], s.chip.shape[1]});
      x.v = s.chip.v;
      auto logits = net_forward(ad::leaf(std::move(x)), s.comps, vars, cfg);
      auto sm = ad::softmax(logits, 0);
      for (std::size_t c = 0; c < cfg.n_classes; ++c)
        scores.at(i, c) = sm->val.v[c];
    }
  });
  return scores;
}

template <class T>
inline std::vector<std::size_t> predict_labels(const Tensor<T>& scores) {
  std::vector<std::size_t> out(scores.shape[0]);
  for (std::size_t i = 0; i < scores.shape[0]; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.shape[1]; ++c)
      if (scores.at(i, c) > scores.at(i, best)) best = c;
    out[i] = best;
  }
  return out;
}

template <class T>
inline double accuracy(const NetState<T>& st, const BackboneConfig& cfg,
                       const std::vector<Sample<T>>& set, int n_threads = 0) {
  require(!set.empty(), "net: empty evaluation set");
  auto labels = predict_labels(predict_scores(st, cfg, set, n_threads));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < set.size(); ++i) hits += labels[i] == set[i].label;
  return double(hits) / double(set.size());
}

struct TrainConfig {
  double lr = 5e-3;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 1000;
  std::size_t patience = 200;  // epochs without a new best validation accuracy
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
  int n_threads = 0;
  // Optional shortcut: a perfect validation epoch cannot be improved on, so
  // stop there instead of waiting out the patience window. Off by default so
  // training loss keeps falling through max_epochs when validation saturates.
  bool stop_when_val_perfect = false;

  void validate() const {
    require(lr >= 0.0 && std::isfinite(lr), "train: lr must be finite and non-negative");
    require(momentum >= 0.0 && momentum < 1.0, "train: momentum in [0,1)");
    require(weight_decay >= 0.0, "train: weight decay must be non-negative");
    require(batch_size >= 1 && max_epochs >= 1 && repeats >= 1, "train: counts must be positive");
    require(patience >= 1 && patience <= max_epochs, "train: patience must be in [1, max_epochs]");
  }
};

struct EpochStat {
  std::size_t epoch;
  double train_loss;
  double val_acc;
};

struct TrainResult {
  std::vector<EpochStat> history;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

namespace detail {

// gradient of the mean cross-entropy over [b, e) of the epoch ordering,
// written into `slot` in named-parameter order
template <class T>
inline double batch_gradients(const NetState<T>& st, const BackboneConfig& cfg,
                              const std::vector<Sample<T>>& data,
                              const std::vector<std::size_t>& order, std::size_t b, std::size_t e,
                              std::vector<Tensor<T>>& slot, int n_threads) {
  const std::size_t bs = e - b;
  constexpr std::size_t kChunk = 4;  // samples sharing one lifted weight set
  const std::size_t n_chunks = (bs + kChunk - 1) / kChunk;
  std::vector<std::vector<Tensor<T>>> per_chunk(n_chunks);
  std::vector<double> chunk_loss(n_chunks, 0.0);
  parallel_chunks(bs, kChunk, n_threads, [&](std::size_t ci, std::size_t jb, std::size_t je) {
    auto vars = lift(st);  // chunk-private leaves; grads accumulate over its samples
    double acc = 0.0;
    for (std::size_t j = jb; j < je; ++j) {
      const auto& s = data[order[b + j]];
      Tensor<T> x(Shape{1, s.chip.shape[0], s.chip.shape[1]});
      x.v = s.chip.v;
      auto loss = ad::cross_entropy(net_forward(ad::leaf(std::move(x)), s.comps, vars, cfg),
                                    s.label);
      ad::backward(loss);
      acc += double(loss->val.v[0]);
    }
    chunk_loss[ci] = acc;
    auto leaves = vars.all();
    per_chunk[ci].reserve(leaves.size());
    for (auto& l : leaves)
      per_chunk[ci].push_back(l->grad.shape.empty() ? Tensor<T>(l->val.shape)
                                                    : std::move(l->grad));
  });
  // ordered reduction: chunk 0 + chunk 1 + ... regardless of thread count
  double loss_sum = 0.0;
  for (std::size_t ci = 0; ci < n_chunks; ++ci) {
    loss_sum += chunk_loss[ci];
    for (std::size_t p = 0; p < slot.size(); ++p)
      for (std::size_t i = 0; i < slot[p].numel(); ++i)
        slot[p].v[i] += per_chunk[ci][p].v[i];
  }
  const T inv = T(1.0 / double(bs));
  for (auto& g : slot)
    for (auto& v : g.v) v *= inv;
  return loss_sum;
}

}  // namespace detail

// SGD with momentum and weight decay, early stopping on validation accuracy,
// best-epoch weight restoration. Deterministic for a fixed seed and config.
template <class T>
inline TrainResult train(NetState<T>& st, const BackboneConfig& cfg,
                         const std::vector<Sample<T>>& train_set,
                         const std::vector<Sample<T>>& val_set, const TrainConfig& tc) {
  cfg.validate();
  tc.validate();
  require(!train_set.empty() && !val_set.empty(), "train: datasets must be non-empty");
  for (const auto& s : train_set)
    require(s.label < cfg.n_classes, "train: label out of range");
  for (const auto& s : val_set)
    require(s.label < cfg.n_classes, "train: label out of range");
  const int n_threads = tc.n_threads > 0 ? tc.n_threads : default_threads();

  auto params = st.named_params();
  std::vector<Tensor<T>> velocity;
  velocity.reserve(params.size());
  for (auto& [name, p] : params) velocity.emplace_back(p->shape);

  TrainResult res;
  std::vector<Tensor<T>> best_weights;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    Rng shuffle_rng = Rng::child(tc.seed, 0x5351 + epoch);
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < train_set.size(); b += tc.batch_size) {
      const std::size_t e = std::min(train_set.size(), b + tc.batch_size);
      std::vector<Tensor<T>> grads;
      grads.reserve(params.size());
      for (auto& [name, p] : params) grads.emplace_back(p->shape);
      epoch_loss += detail::batch_gradients(st, cfg, train_set, order, b, e, grads, n_threads);
      for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<T>& w = *params[p].second;
        for (std::size_t i = 0; i < w.numel(); ++i) {
          const T g = grads[p].v[i] + T(tc.weight_decay) * w.v[i];
          velocity[p].v[i] = T(tc.momentum) * velocity[p].v[i] + g;
          w.v[i] -= T(tc.lr) * velocity[p].v[i];
        }
      }
    }
    epoch_loss /= double(train_set.size());
    if (!std::isfinite(epoch_loss))
      fail_numeric("non-finite training loss at epoch " + std::to_string(epoch) +
                   " (learning rate likely too high)");

    const double val_acc = accuracy(st, cfg, val_set, n_threads);
    res.history.push_back({epoch, epoch_loss, val_acc});
    res.epochs_run = epoch + 1;
    if (res.history.size() == 1 || val_acc > res.best_val_acc) {
      res.best_val_acc = val_acc;
      res.best_epoch = epoch;
      best_weights.clear();
      for (auto& [name, p] : params) best_weights.push_back(*p);
    }
    log_debug("epoch %zu loss %.6f val %.4f", epoch, epoch_loss, val_acc);
    if (tc.stop_when_val_perfect && res.best_val_acc >= 1.0) break;
    if (epoch - res.best_epoch >= tc.patience) break;
  }

  for (std::size_t p = 0; p < params.size(); ++p) *params[p].second = best_weights[p];
  return res;
}

inline std::string history_csv(const std::vector<EpochStat>& history) {
  CsvWriter csv("epoch,train_loss,val_acc");
  for (const auto& h : history) {
    csv.field(std::int64_t(h.epoch));
    csv.field(h.train_loss);
    csv.field(h.val_acc);
    csv.endrow();
  }
  return csv.str();
}

// Checkpoints: one SKB1 blob per named parameter plus a text manifest.
template <class T>
inline void save_checkpoint(const std::string& dir, NetState<T>& st) {
  std::string manifest;
  for (auto& [name, p] : st.named_params()) {
    const std::string file = name + ".skb";
    skb_write(dir + "/" + file, to_skb(*p));
    manifest += name + " " + file + "\n";
  }
  write_file(dir + "/params.txt", manifest);
}

template <class T>
inline void load_checkpoint(const std::string& dir, NetState<T>& st) {
  for (auto& [name, p] : st.named_params()) {
    auto blob = skb_read(dir + "/" + name + ".skb");
    require(blob.shape == p->shape, "checkpoint: shape mismatch for " + name);
    *p = skb_to_tensor<T>(blob);
  }
}

}  // namespace sk::net
