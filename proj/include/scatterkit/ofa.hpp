#pragma once

// Operating-condition evaluation harness. Builds a labeled synthetic chip
// pool plus three test sets under progressively stronger condition shift,
// trains paired models (with and without the physics attention) over
// repeated stratified splits, and summarizes accuracy, confusion and
// per-azimuth behavior.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "scatterkit/components.hpp"
#include "scatterkit/net.hpp"
#include "scatterkit/radar.hpp"

namespace sk::ofa {

// ---------------------------------------------------------------------------
// Stratified splits
// ---------------------------------------------------------------------------

struct Split {
  std::vector<std::size_t> train, val;
};

// Validation share paired with each training budget: the 90% budget keeps a
// thin 10%-of-remainder check set, smaller budgets split the remainder in
// half so early stopping still sees enough samples.
inline double val_fraction_for(double train_fraction) {
  if (train_fraction == 0.9) return 0.1;
  if (train_fraction == 0.5 || train_fraction == 0.3 || train_fraction == 0.1) return 0.5;
  fail_config("train fraction must be one of 0.9, 0.5, 0.3, 0.1");
}

// Per-class shuffle, then counts by rounded fractions. Train and val are
// disjoint by construction; leftovers stay unused. Deterministic in
// (labels, train_fraction, seed).
inline Split make_splits(const std::vector<std::size_t>& labels, double train_fraction,
                         std::uint64_t seed) {
  require(labels.size() >= 10, "split: pool must have at least 10 samples");
  const double vf = val_fraction_for(train_fraction);
  std::size_t n_classes = 0;
  for (std::size_t l : labels) n_classes = std::max(n_classes, l + 1);
  Split out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    if (idx.empty()) continue;  // label ids may have holes
    const auto n_train = std::size_t(std::llround(double(idx.size()) * train_fraction));
    const auto n_val = std::size_t(std::llround(double(idx.size() - n_train) * vf));
    if (n_train < 1 || n_val < 1 || n_train + n_val > idx.size())
      fail_config("split: class " + std::to_string(c) + " has too few samples (" +
                  std::to_string(idx.size()) + ") for one train and one val item");
    Rng rng = Rng::child(seed, 0x517000 + c);
    rng.shuffle(idx);
    out.train.insert(out.train.end(), idx.begin(), idx.begin() + n_train);
    out.val.insert(out.val.end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic pool and shifted test sets
// ---------------------------------------------------------------------------

struct SynthSetConfig {
  std::size_t n_classes = 8;
  std::size_t per_class = 200;      // known-pool chips per class
  std::size_t test_per_class = 50;  // chips per class (and per depression) in test sets
  std::size_t chip = 32;            // final chip resolution
  std::size_t render_pad = 64;      // render resolution before box pooling
  std::size_t k_components = 4;
  double jitter_pos = 0.15;  // m
  double jitter_amp = 1.3;
  int clutter = 3;
  double clutter_amp = 0.25;
  double train_depression_deg = 17.0;
  double test_aspect_offset_deg = 2.0;          // mild sensor shift on every test set
  std::vector<int> variant_classes = {0, 2};    // classes that gain variant layouts
  std::vector<int> scaled_classes = {4, 5, 7};  // classes re-measured at other depressions
  std::vector<double> scaled_depression_deg = {15.0, 30.0, 45.0};
  std::uint64_t seed = 1;
  radar::RadarConfig radar;

  void validate() const {
    require(n_classes >= 2 && n_classes <= std::size_t(radar::kNumSynthClasses),
            "synthset: n_classes must be in [2, " + std::to_string(radar::kNumSynthClasses) + "]");
    require(per_class >= 10, "synthset: per_class must be >= 10");
    require(test_per_class >= 1, "synthset: test_per_class must be >= 1");
    require(chip >= 8 && render_pad >= chip && render_pad % chip == 0,
            "synthset: render_pad must be a multiple of chip");
    require(k_components >= 1, "synthset: k_components must be >= 1");
    for (int c : variant_classes)
      require(c >= 0 && std::size_t(c) < n_classes, "synthset: variant class out of range");
    for (int c : scaled_classes)
      require(c >= 0 && std::size_t(c) < n_classes, "synthset: scaled class out of range");
    require(!scaled_depression_deg.empty(), "synthset: need at least one test depression");
    require(std::cos(train_depression_deg * radar::kPi / 180.0) > 0.1,
            "synthset: train depression too steep");
    radar.validate();
  }
};

// Deterministic configuration variants of a base layout (the synthetic
// counterpart of alternate production serials): extra fittings, or moved and
// re-weighted ones.
inline std::vector<radar::ScatterCenter> variant_template(int class_id, int variant) {
  using radar::detail::mk;
  require(variant == 0 || variant == 1, "variant_template: variant must be 0 or 1");
  auto t = radar::class_template(class_id);
  if (variant == 0) {
    t.push_back(mk(1.2, 1.6, -1.9, 0.5, 0.0, 0));
    t.push_back(mk(0.5, -1.7, 1.5, 0.0, 0.0, 0));
  } else {
    for (auto& c : t) {
      c.x *= 0.92;
      c.y *= 1.06;
    }
    t[0].amplitude_re *= 0.55;
    t[0].amplitude_im *= 0.55;
    t.push_back(mk(0.8, 0.9, 2.1, 1.0, 1.2, 15));
  }
  for (auto& c : t) c = radar::normalize_center(c);
  return t;
}

namespace detail {

inline void rotate_centers(std::vector<radar::ScatterCenter>& cs, double angle) {
  const double cr = std::cos(angle), sr = std::sin(angle);
  for (auto& c : cs) {
    const double x = c.x * cr - c.y * sr;
    const double y = c.x * sr + c.y * cr;
    c.x = x;
    c.y = y;
    if (c.length > 0.0) c.phi_bar += angle;
  }
}

inline std::string strf(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

// One chip: jittered draw from the layout, azimuth rotation, render, box
// pooling to chip size, per-chip max normalization. Physics maps come from
// the generator's own centers through the clustering stage, so every chip
// carries k component images on the same grid.
template <class T>
inline net::Sample<T> make_chip(const std::vector<radar::ScatterCenter>& tmpl, std::size_t label,
                                const SynthSetConfig& sc, const radar::RadarConfig& rc,
                                double pos_scale, double azimuth_deg, std::uint64_t chip_seed,
                                std::string id) {
  auto t = tmpl;
  if (pos_scale != 1.0)
    for (auto& c : t) {
      c.x *= pos_scale;
      c.y *= pos_scale;
      c.length *= pos_scale;
    }
  radar::SynthJitter jit;
  jit.pos = sc.jitter_pos;
  jit.amp = sc.jitter_amp;
  jit.rot = 0.0;
  jit.clutter = sc.clutter;
  jit.clutter_amp = sc.clutter_amp;
  Rng rng(chip_seed);
  auto draw = radar::synth_from_template(t, jit, rng);
  rotate_centers(draw.centers, azimuth_deg * radar::kPi / 180.0);

  auto spec = radar::evaluate_spectrum(draw.centers, rc);
  auto img = radar::render_image(spec, sc.render_pad);
  const std::size_t f = sc.render_pad / sc.chip;
  RMat small = f > 1 ? box_downsample2d(img.pixels, f) : img.pixels;
  double mx = 0.0;
  for (double v : small.v) mx = std::max(mx, v);

  net::Sample<T> s;
  s.chip = Tensor<T>(Shape{sc.chip, sc.chip});
  for (std::size_t i = 0; i < small.numel(); ++i) s.chip.v[i] = T(mx > 0 ? small.v[i] / mx : 0.0);
  auto assign = components::cluster_centers(draw.centers, components::FeatureBasis::XYA,
                                            sc.k_components, chip_seed);
  auto comp = components::reconstruct_components(draw.centers, assign, sc.k_components, rc,
                                                 sc.render_pad);
  for (const auto& ci : comp.images)
    s.comps.push_back(f > 1 ? box_downsample2d(ci.pixels, f) : ci.pixels);
  s.label = label;
  s.azimuth_deg = azimuth_deg;
  s.id = std::move(id);
  return s;
}

// Disjoint child-rng streams per (set kind, class, chip index), so each set
// is independent of the others and of generation order.
inline std::uint64_t chip_stream(std::uint64_t kind, std::size_t cls, std::size_t i) {
  return (kind << 40) ^ (std::uint64_t(cls) << 20) ^ std::uint64_t(i);
}

}  // namespace detail

// The known pool: nominal sensor geometry, base layouts, azimuth uniform over
// the full circle. Training/validation splits are drawn from this pool.
template <class T = double>
inline std::vector<net::Sample<T>> build_pool(const SynthSetConfig& sc) {
  sc.validate();
  std::vector<net::Sample<T>> out;
  out.reserve(sc.n_classes * sc.per_class);
  for (std::size_t c = 0; c < sc.n_classes; ++c)
    for (std::size_t i = 0; i < sc.per_class; ++i) {
      Rng rng = Rng::child(sc.seed, detail::chip_stream(0, c, i));
      const double az = rng.uniform(0.0, 360.0);
      out.push_back(detail::make_chip<T>(radar::class_template(int(c)), c, sc, sc.radar, 1.0, az,
                                         rng.next_u64(),
                                         "pool_c" + std::to_string(c) + "_" + std::to_string(i)));
    }
  return out;
}

template <class T = double>
struct TestSets {
  std::vector<net::Sample<T>> ofa1, ofa2, ofa3;
};

// Three nested condition shifts:
//  - set 1: same layouts, fresh draws, sensor aspect center offset
//  - set 2: set 1 plus configuration-variant layouts for selected classes
//  - set 3: selected classes re-projected for other depression angles (the
//    ground-plane footprint scales with cos(depression)), strongest shift
template <class T = double>
inline TestSets<T> build_testsets(const SynthSetConfig& sc) {
  sc.validate();
  radar::RadarConfig rc = sc.radar;
  rc.aspect_center += sc.test_aspect_offset_deg * radar::kPi / 180.0;
  TestSets<T> ts;
  for (std::size_t c = 0; c < sc.n_classes; ++c)
    for (std::size_t i = 0; i < sc.test_per_class; ++i) {
      Rng rng = Rng::child(sc.seed, detail::chip_stream(1, c, i));
      const double az = rng.uniform(0.0, 360.0);
      ts.ofa1.push_back(detail::make_chip<T>(radar::class_template(int(c)), c, sc, rc, 1.0, az,
                                             rng.next_u64(),
                                             "ofa1_c" + std::to_string(c) + "_" + std::to_string(i)));
    }
  ts.ofa2 = ts.ofa1;
  for (int vc : sc.variant_classes)
    for (int variant = 0; variant < 2; ++variant)
      for (std::size_t i = 0; i < sc.test_per_class; ++i) {
        Rng rng = Rng::child(sc.seed, detail::chip_stream(2 + std::uint64_t(variant),
                                                          std::size_t(vc), i));
        const double az = rng.uniform(0.0, 360.0);
        ts.ofa2.push_back(detail::make_chip<T>(
            variant_template(vc, variant), std::size_t(vc), sc, rc, 1.0, az, rng.next_u64(),
            "ofa2_c" + std::to_string(vc) + "v" + std::to_string(variant) + "_" +
                std::to_string(i)));
      }
  const double cos_train = std::cos(sc.train_depression_deg * radar::kPi / 180.0);
  for (int c3 : sc.scaled_classes)
    for (std::size_t di = 0; di < sc.scaled_depression_deg.size(); ++di) {
      const double dep = sc.scaled_depression_deg[di];
      const double scale = std::cos(dep * radar::kPi / 180.0) / cos_train;
      for (std::size_t i = 0; i < sc.test_per_class; ++i) {
        Rng rng = Rng::child(sc.seed, detail::chip_stream(8 + di, std::size_t(c3), i));
        const double az = rng.uniform(0.0, 360.0);
        ts.ofa3.push_back(detail::make_chip<T>(
            radar::class_template(c3), std::size_t(c3), sc, rc, scale, az, rng.next_u64(),
            "ofa3_c" + std::to_string(c3) + "d" + std::to_string(int(dep)) + "_" +
                std::to_string(i)));
      }
    }
  return ts;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

// A trained repeat, reduced to its decision function.
template <class T>
using Predictor = std::function<std::vector<std::size_t>(const std::vector<net::Sample<T>>&)>;

template <class T>
inline Predictor<T> net_predictor(const net::NetState<T>* st, const net::BackboneConfig* cfg,
                                  int n_threads = 0) {
  return [st, cfg, n_threads](const std::vector<net::Sample<T>>& set) {
    return net::predict_labels(net::predict_scores(*st, *cfg, set, n_threads));
  };
}

inline std::size_t azimuth_bin(double azimuth_deg) {
  double a = std::fmod(azimuth_deg, 360.0);
  if (a < 0.0) a += 360.0;
  return std::min<std::size_t>(35, std::size_t(a / 10.0));
}

struct SetEval {
  std::string name;
  std::vector<double> repeat_acc;                   // percent, one per trained repeat
  double mean = 0.0;                                // percent
  double stddev = 0.0;                              // percent, population form
  std::vector<std::vector<std::size_t>> confusion;  // [true][pred], first repeat
  std::array<std::size_t, 36> bin_count{};          // chips per 10-degree azimuth bin
  std::array<std::size_t, 36> bin_hits{};           // correct calls, summed over repeats
};

template <class T>
inline SetEval evaluate_set(const std::vector<Predictor<T>>& repeats, std::size_t n_classes,
                            const std::vector<net::Sample<T>>& set, std::string name) {
  require(!repeats.empty(), "evaluate: need at least one trained repeat");
  require(!set.empty(), "evaluate: empty test set");
  SetEval ev;
  ev.name = std::move(name);
  ev.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  for (const auto& s : set) {
    require(s.label < n_classes, "evaluate: label out of range");
    ev.bin_count[azimuth_bin(s.azimuth_deg)]++;
  }
  for (std::size_t r = 0; r < repeats.size(); ++r) {
    auto pred = repeats[r](set);
    require(pred.size() == set.size(), "evaluate: predictor output size mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      require(pred[i] < n_classes, "evaluate: predicted label out of range");
      const bool ok = pred[i] == set[i].label;
      hits += ok;
      if (ok) ev.bin_hits[azimuth_bin(set[i].azimuth_deg)]++;
      if (r == 0) ev.confusion[set[i].label][pred[i]]++;
    }
    ev.repeat_acc.push_back(100.0 * double(hits) / double(set.size()));
  }
  for (double a : ev.repeat_acc) ev.mean += a;
  ev.mean /= double(ev.repeat_acc.size());
  double ss = 0.0;
  for (double a : ev.repeat_acc) ss += (a - ev.mean) * (a - ev.mean);
  ev.stddev = std::sqrt(ss / double(ev.repeat_acc.size()));
  return ev;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct OfaReport {
  std::vector<std::string> models;          // row labels
  std::vector<std::vector<SetEval>> evals;  // [model][test set]
  double train_fraction = 0.9;
  std::size_t train_size = 0, val_size = 0;
};

inline std::string report_text(const OfaReport& r) {
  require(!r.models.empty() && r.models.size() == r.evals.size(), "report: malformed");
  std::string out = "accuracy (%), mean +/- std over " +
                    std::to_string(r.evals[0][0].repeat_acc.size()) + " repeats, train fraction " +
                    detail::strf("%g", r.train_fraction) + " (" + std::to_string(r.train_size) +
                    " train / " + std::to_string(r.val_size) + " val chips)\n\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s", "method");
  out += buf;
  for (const auto& ev : r.evals[0]) {
    std::snprintf(buf, sizeof buf, "  %-18s", ev.name.c_str());
    out += buf;
  }
  out += '\n';
  for (std::size_t m = 0; m < r.models.size(); ++m) {
    std::snprintf(buf, sizeof buf, "%-12s", r.models[m].c_str());
    out += buf;
    for (const auto& ev : r.evals[m]) {
      std::string cell = detail::strf("%.2f", ev.mean) + " +/- " + detail::strf("%.2f", ev.stddev);
      std::snprintf(buf, sizeof buf, "  %-18s", cell.c_str());
      out += buf;
    }
    out += '\n';
  }
  return out;
}

inline std::string report_csv(const OfaReport& r) {
  CsvWriter csv("model,test_set,stat,value");
  for (std::size_t m = 0; m < r.models.size(); ++m)
    for (const auto& ev : r.evals[m]) {
      for (std::size_t i = 0; i < ev.repeat_acc.size(); ++i) {
        csv.field(r.models[m]);
        csv.field(ev.name);
        csv.field("repeat" + std::to_string(i));
        csv.field(ev.repeat_acc[i]);
        csv.endrow();
      }
      csv.field(r.models[m]);
      csv.field(ev.name);
      csv.field("mean");
      csv.field(ev.mean);
      csv.endrow();
      csv.field(r.models[m]);
      csv.field(ev.name);
      csv.field("std");
      csv.field(ev.stddev);
      csv.endrow();
    }
  return csv.str();
}

inline std::string confusion_csv(const SetEval& ev) {
  CsvWriter csv("true_class,pred_class,count");
  for (std::size_t t = 0; t < ev.confusion.size(); ++t)
    for (std::size_t p = 0; p < ev.confusion[t].size(); ++p) {
      csv.field(std::int64_t(t));
      csv.field(std::int64_t(p));
      csv.field(std::int64_t(ev.confusion[t][p]));
      csv.endrow();
    }
  return csv.str();
}

inline std::string azimuth_csv(const SetEval& ev) {
  CsvWriter csv("bin_start_deg,chips,hits,accuracy");
  const double reps = double(ev.repeat_acc.size());
  for (std::size_t b = 0; b < 36; ++b) {
    csv.field(std::int64_t(b * 10));
    csv.field(std::int64_t(ev.bin_count[b]));
    csv.field(std::int64_t(ev.bin_hits[b]));
    csv.field(ev.bin_count[b] ? double(ev.bin_hits[b]) / (double(ev.bin_count[b]) * reps) : 0.0);
    csv.endrow();
  }
  return csv.str();
}

// Attention weights over the first chips of a set, one row per channel. The
// per-stage records share the sample id with a ":s<stage>" suffix.
template <class T>
inline std::string attention_csv(const net::NetState<T>& st, const net::BackboneConfig& cfg,
                                 const std::vector<net::Sample<T>>& set, std::size_t max_chips) {
  CsvWriter csv(piha::attention_csv_header());
  const std::size_t n = std::min(max_chips, set.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto pr = net::predict_with_attention(st, cfg, set[i]);
    for (const auto& a : pr.attn)
      piha::append_attention_rows(csv, set[i].id + ":s" + std::to_string(a.stage),
                                  set[i].azimuth_deg, a.d_attn, a.patt_bar);
  }
  return csv.str();
}

// ---------------------------------------------------------------------------
// Paired-model harness
// ---------------------------------------------------------------------------

struct HarnessConfig {
  SynthSetConfig data;
  net::BackboneConfig backbone;  // its insertion points define the attention model
  net::TrainConfig tc;           // per-run settings; tc.seed is re-derived per repeat
  double train_fraction = 0.9;
  std::size_t repeats = 5;
  bool with_baseline = true;
  std::uint64_t seed = 1;

  HarnessConfig() {
    backbone.n_classes = data.n_classes;
    backbone.input_hw = data.chip;
    tc.stop_when_val_perfect = true;
  }
};

template <class T = double>
struct HarnessResult {
  OfaReport report;
  std::vector<net::NetState<T>> piha_states, baseline_states;
  std::vector<net::TrainResult> piha_runs, baseline_runs;
  TestSets<T> tests;
  std::size_t pool_size = 0;
};

// Repeats share one pool and one set of test chips; each repeat draws a fresh
// split, init and shuffle stream. The baseline (attention removed) sees the
// exact same splits and, because attention draws fork off the init stream,
// the exact same initial conv and head weights.
template <class T = double>
inline HarnessResult<T> run_harness(const HarnessConfig& hc) {
  require(hc.repeats >= 1, "harness: repeats must be >= 1");
  require(hc.backbone.n_classes == hc.data.n_classes, "harness: backbone classes != data classes");
  require(hc.backbone.input_hw == hc.data.chip, "harness: backbone resolution != chip size");
  require(!hc.backbone.piha_after_stage.empty(), "harness: backbone must insert attention");

  log_info("harness: synthesizing pool (%zu chips)", hc.data.n_classes * hc.data.per_class);
  auto pool = build_pool<T>(hc.data);
  log_info("harness: synthesizing test sets");
  HarnessResult<T> out;
  out.tests = build_testsets<T>(hc.data);
  out.pool_size = pool.size();

  std::vector<std::size_t> labels(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) labels[i] = pool[i].label;

  net::BackboneConfig base_cfg = hc.backbone;
  base_cfg.piha_after_stage.clear();

  OfaReport rep;
  rep.train_fraction = hc.train_fraction;
  rep.models.push_back("piha");
  if (hc.with_baseline) rep.models.push_back("baseline");

  for (std::size_t r = 0; r < hc.repeats; ++r) {
    auto split = make_splits(labels, hc.train_fraction,
                             Rng::child(hc.seed, 0x5EED00 + r).next_u64());
    std::vector<net::Sample<T>> train_set, val_set;
    train_set.reserve(split.train.size());
    val_set.reserve(split.val.size());
    for (auto i : split.train) train_set.push_back(pool[i]);
    for (auto i : split.val) val_set.push_back(pool[i]);
    if (r == 0) {
      rep.train_size = train_set.size();
      rep.val_size = val_set.size();
    }
    net::TrainConfig tc = hc.tc;
    tc.seed = Rng::child(hc.seed, 0x7C0000 + r).next_u64();

    Rng init = Rng::child(hc.seed, 0x171000 + r);
    auto st = net::init_net<T>(hc.backbone, init);
    auto res = net::train(st, hc.backbone, train_set, val_set, tc);
    log_info("harness: repeat %zu attention model best val %.4f (epoch %zu of %zu)", r,
             res.best_val_acc, res.best_epoch, res.epochs_run);
    out.piha_states.push_back(std::move(st));
    out.piha_runs.push_back(std::move(res));

    if (hc.with_baseline) {
      Rng binit = Rng::child(hc.seed, 0x171000 + r);  // same stream: paired backbone init
      auto bst = net::init_net<T>(base_cfg, binit);
      auto bres = net::train(bst, base_cfg, train_set, val_set, tc);
      log_info("harness: repeat %zu baseline best val %.4f (epoch %zu of %zu)", r,
               bres.best_val_acc, bres.best_epoch, bres.epochs_run);
      out.baseline_states.push_back(std::move(bst));
      out.baseline_runs.push_back(std::move(bres));
    }
  }

  const std::size_t nc = hc.backbone.n_classes;
  std::vector<Predictor<T>> piha_preds, base_preds;
  for (const auto& st : out.piha_states)
    piha_preds.push_back(net_predictor<T>(&st, &hc.backbone, hc.tc.n_threads));
  for (const auto& st : out.baseline_states)
    base_preds.push_back(net_predictor<T>(&st, &base_cfg, hc.tc.n_threads));

  auto eval_model = [&](const std::vector<Predictor<T>>& preds) {
    std::vector<SetEval> v;
    v.push_back(evaluate_set(preds, nc, out.tests.ofa1, "set-1"));
    v.push_back(evaluate_set(preds, nc, out.tests.ofa2, "set-2"));
    v.push_back(evaluate_set(preds, nc, out.tests.ofa3, "set-3"));
    return v;
  };
  rep.evals.push_back(eval_model(piha_preds));
  if (hc.with_baseline) rep.evals.push_back(eval_model(base_preds));
  out.report = std::move(rep);
  return out;
}

}  // namespace sk::ofa
