// Command-line front end for the scatterkit library. Every subcommand reads a
// flat key=value config (flags override), writes its artifacts under --out,
// and finishes with a run_manifest.txt listing each artifact's fnv1a-64 hash.
// Outputs never embed timestamps, thread counts or absolute paths, so reruns
// of the same configuration are byte-identical.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scatterkit/ascfit.hpp"
#include "scatterkit/checksuite.hpp"
#include "scatterkit/components.hpp"
#include "scatterkit/config.hpp"
#include "scatterkit/hash.hpp"
#include "scatterkit/io.hpp"
#include "scatterkit/mstar.hpp"
#include "scatterkit/net.hpp"
#include "scatterkit/ofa.hpp"
#include "scatterkit/radar.hpp"

namespace fs = std::filesystem;
using namespace sk;

namespace {

// ---------------------------------------------------------------------------
// Run output directory with artifact hashing
// ---------------------------------------------------------------------------

class RunWriter {
 public:
  explicit RunWriter(const std::string& out) : dir_(out) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail_io("cannot create output directory '" + out + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    if (p.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(p.parent_path(), ec);
      if (ec) fail_io("cannot create '" + p.parent_path().string() + "': " + ec.message());
    }
    write_file(p.string(), bytes);
    artifacts_.emplace_back(name, fnv1a64(bytes.data(), bytes.size()));
  }

  void write_skb(const std::string& name, const SkbBlob& blob) { write(name, skb_encode(blob)); }

  // The manifest itself is not listed as an artifact. The config hash covers
  // every semantic key; `threads` is an execution detail and excluded.
  void finish(const std::string& subcommand, const Config& cfg) {
    std::string kv;
    for (const auto& [k, v] : cfg.entries())
      if (k != "threads") kv += k + "=" + v + "\n";
    std::string m = "scatterkit run manifest\n";
    m += "subcommand " + subcommand + "\n";
    m += "config_hash " + hash_hex(fnv1a64(kv.data(), kv.size())) + "\n";
    for (const auto& [name, h] : artifacts_) m += "artifact " + name + " " + hash_hex(h) + "\n";
    write_file((dir_ / "run_manifest.txt").string(), m);
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::uint64_t>> artifacts_;
};

// ---------------------------------------------------------------------------
// Config helpers
// ---------------------------------------------------------------------------

std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t pos = s.find(',', start);
    std::string tok = s.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (!tok.empty()) {
      try {
        std::size_t used = 0;
        long long v = std::stoll(tok, &used);
        if (used != tok.size() || v < 0) throw std::invalid_argument("");
        out.push_back(std::size_t(v));
      } catch (const std::exception&) {
        fail_config("config key '" + key + "': bad list entry '" + tok + "'");
      }
    }
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

ofa::SynthSetConfig synth_cfg_from(const Config& c) {
  ofa::SynthSetConfig sc;
  sc.n_classes = std::size_t(c.get_int("classes", 3));
  sc.per_class = std::size_t(c.get_int("per_class", 10));
  sc.test_per_class = std::size_t(c.get_int("test_per_class", 3));
  sc.chip = std::size_t(c.get_int("chip", 16));
  sc.render_pad = std::size_t(c.get_int("render_pad", 64));
  sc.k_components = std::size_t(c.get_int("k_components", 2));
  sc.jitter_pos = c.get_double("jitter_pos", 0.15);
  sc.jitter_amp = c.get_double("jitter_amp", 1.3);
  sc.clutter = int(c.get_int("clutter", 3));
  sc.clutter_amp = c.get_double("clutter_amp", 0.25);
  sc.seed = std::uint64_t(c.get_int("seed", 1));
  auto class_list = [&](const char* key, std::vector<int> dflt) {
    if (c.has(key)) {
      dflt.clear();
      for (auto v : parse_size_list(c.get_str(key, ""), key)) dflt.push_back(int(v));
    }
    std::erase_if(dflt, [&](int v) { return std::size_t(v) >= sc.n_classes; });
    return dflt;
  };
  sc.variant_classes = class_list("variant_classes", sc.variant_classes);
  sc.scaled_classes = class_list("scaled_classes", sc.scaled_classes);
  return sc;
}

net::BackboneConfig backbone_from(const Config& c, std::size_t n_classes, std::size_t chip) {
  net::BackboneConfig cfg;
  cfg.stage_channels = parse_size_list(c.get_str("stages", "8,16"), "stages");
  cfg.first_kernel = std::size_t(c.get_int("first_kernel", 3));
  cfg.later_kernel = std::size_t(c.get_int("later_kernel", 3));
  cfg.pool = std::size_t(c.get_int("pool", 2));
  cfg.piha_after_stage = parse_size_list(c.get_str("piha_after", "1"), "piha_after");
  cfg.groups = std::size_t(c.get_int("groups", 2));
  cfg.se_reduction = std::size_t(c.get_int("se_reduction", 4));
  cfg.sse_reduction = std::size_t(c.get_int("sse_reduction", 2));
  cfg.sap_threshold = c.get_double("sap_threshold", 0.05);
  cfg.pam_kernel = std::size_t(c.get_int("pam_kernel", 3));
  cfg.se_enabled = c.get_bool("se_enabled", true);
  cfg.pir_enabled = c.get_bool("pir_enabled", true);
  if (c.has("fixed_pase_scale")) cfg.fixed_pase_scale = c.get_double("fixed_pase_scale", 0.0);
  cfg.n_classes = n_classes;
  cfg.input_hw = chip;
  return cfg;
}

radar::RadarConfig radar_from(const Config& c) {
  radar::RadarConfig rc;
  rc.n_freq = std::size_t(c.get_int("n_freq", 64));
  rc.n_aspect = std::size_t(c.get_int("n_aspect", 64));
  rc.center_freq = c.get_double("center_freq", rc.center_freq);
  rc.bandwidth = c.get_double("bandwidth", rc.bandwidth);
  rc.aspect_span = c.get_double("aspect_span_deg", 3.0) * radar::kPi / 180.0;
  rc.aspect_center = c.get_double("aspect_center_deg", 0.0) * radar::kPi / 180.0;
  return rc;
}

components::FeatureBasis basis_from(const Config& c) {
  const std::string b = c.get_str("basis", "xya");
  if (b == "full") return components::FeatureBasis::Full;
  if (b == "xya") return components::FeatureBasis::XYA;
  if (b == "xy") return components::FeatureBasis::XY;
  if (b == "amploc") return components::FeatureBasis::AmpLoc;
  fail_config("config key 'basis': want one of full, xya, xy, amploc; got '" + b + "'");
}

std::string centers_csv(const std::vector<radar::ScatterCenter>& cs) {
  CsvWriter csv("index,x,y,alpha,length,phi_bar,amp_re,amp_im");
  for (std::size_t i = 0; i < cs.size(); ++i) {
    csv.field(std::int64_t(i));
    csv.field(cs[i].x);
    csv.field(cs[i].y);
    csv.field(cs[i].alpha);
    csv.field(cs[i].length);
    csv.field(cs[i].phi_bar);
    csv.field(cs[i].amplitude_re);
    csv.field(cs[i].amplitude_im);
    csv.endrow();
  }
  return csv.str();
}

// Draw one jittered target from a class template, as the asc subcommands see
// it: no azimuth rotation, scene-safe defaults.
radar::SynthDraw draw_target(const Config& c) {
  const int class_id = int(c.get_int("class", 0));
  require(class_id >= 0 && class_id < radar::kNumSynthClasses, "class must be in [0, 7]");
  radar::SynthJitter jit;
  jit.pos = c.get_double("jitter_pos", 0.1);
  jit.amp = c.get_double("jitter_amp", 1.2);
  jit.rot = c.get_double("jitter_rot_deg", 0.0) * radar::kPi / 180.0;
  jit.clutter = int(c.get_int("clutter", 0));
  jit.clutter_amp = c.get_double("clutter_amp", 0.25);
  Rng rng(std::uint64_t(c.get_int("seed", 1)));
  return radar::synth_from_template(radar::class_template(class_id), jit, rng);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_synth(const Config& c, RunWriter& out) {
  auto sc = synth_cfg_from(c);
  auto pool = ofa::build_pool<double>(sc);
  Tensor<double> chips(Shape{pool.size(), sc.chip, sc.chip});
  Tensor<double> comps(Shape{pool.size(), sc.k_components, sc.chip, sc.chip});
  CsvWriter labels("id,class,azimuth_deg");
  const std::size_t hw = sc.chip * sc.chip;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    std::copy(pool[i].chip.v.begin(), pool[i].chip.v.end(), chips.v.begin() + i * hw);
    for (std::size_t k = 0; k < sc.k_components; ++k)
      std::copy(pool[i].comps[k].v.begin(), pool[i].comps[k].v.end(),
                comps.v.begin() + (i * sc.k_components + k) * hw);
    labels.field(pool[i].id);
    labels.field(std::int64_t(pool[i].label));
    labels.field(pool[i].azimuth_deg);
    labels.endrow();
  }
  out.write_skb("chips.skb", to_skb(chips));
  out.write_skb("components.skb", to_skb(comps));
  out.write("labels.csv", labels.str());
  std::printf("synthesized %zu chips (%zu classes)\n", pool.size(), sc.n_classes);
}

void cmd_fit_asc(const Config& c, RunWriter& out, int n_threads) {
  Config rcfg = c;
  if (!c.has("n_freq")) rcfg.set("n_freq", "32");
  if (!c.has("n_aspect")) rcfg.set("n_aspect", "32");
  const auto rc = radar_from(rcfg);
  const std::size_t pad = std::size_t(c.get_int("pad", std::max(rc.n_freq, rc.n_aspect)));
  auto draw = draw_target(c);
  auto spec = radar::evaluate_spectrum(draw.centers, rc);

  auto dict = ascfit::DictionaryConfig::pixel_aligned(rc, pad);
  ascfit::AtomTable atoms(rc, dict);
  const std::size_t q_max = std::size_t(c.get_int("q_max", 6));
  const double tol = c.get_double("resid_tol", 1e-3);
  auto fit = ascfit::omp_fit(spec, atoms, q_max, tol, n_threads);

  out.write("centers_true.csv", centers_csv(draw.centers));
  out.write("centers_est.csv", centers_csv(fit.centers));
  CsvWriter resid("iteration,residual");
  for (std::size_t i = 0; i < fit.residual_history.size(); ++i) {
    resid.field(std::int64_t(i + 1));
    resid.field(fit.residual_history[i]);
    resid.endrow();
  }
  out.write("residual.csv", resid.str());
  double spec_norm = 0.0;
  for (const auto& z : spec.data.v) spec_norm += std::norm(z);
  spec_norm = std::sqrt(spec_norm);
  std::printf("estimated %zu centers, relative residual %.3e%s\n", fit.centers.size(),
              spec_norm > 0 ? fit.residual_norm / spec_norm : 0.0,
              fit.rank_warning ? " (rank warning)" : "");
}

void cmd_cluster(const Config& c, RunWriter& out) {
  auto draw = draw_target(c);
  const std::size_t k = std::size_t(c.get_int("k", 4));
  const auto basis = basis_from(c);
  auto assign = components::cluster_centers(draw.centers, basis,
                                            std::min(k, draw.centers.size()),
                                            std::uint64_t(c.get_int("seed", 1)));
  CsvWriter csv("index,x,y,amp_abs,cluster");
  for (std::size_t i = 0; i < draw.centers.size(); ++i) {
    csv.field(std::int64_t(i));
    csv.field(draw.centers[i].x);
    csv.field(draw.centers[i].y);
    csv.field(std::abs(draw.centers[i].amplitude()));
    csv.field(std::int64_t(assign[i]));
    csv.endrow();
  }
  out.write("clusters.csv", csv.str());
  std::printf("clustered %zu centers into %zu groups\n", draw.centers.size(),
              std::min(k, draw.centers.size()));
}

void cmd_render_components(const Config& c, RunWriter& out) {
  const auto rc = radar_from(c);
  const std::size_t pad = std::size_t(c.get_int("pad", 64));
  const std::size_t k = std::size_t(c.get_int("k", 4));
  auto draw = draw_target(c);
  auto assign = components::cluster_centers(draw.centers, basis_from(c),
                                            std::min(k, draw.centers.size()),
                                            std::uint64_t(c.get_int("seed", 1)));
  auto set = components::reconstruct_components(draw.centers, assign,
                                                std::min(k, draw.centers.size()), rc, pad);

  auto full = radar::render_image(radar::evaluate_spectrum(draw.centers, rc), pad);
  out.write_skb("chip.skb", to_skb(full.pixels));
  Tensor<double> maps(Shape{set.images.size(), pad, pad});
  for (std::size_t i = 0; i < set.images.size(); ++i)
    std::copy(set.images[i].pixels.v.begin(), set.images[i].pixels.v.end(),
              maps.v.begin() + i * pad * pad);
  out.write_skb("components.skb", to_skb(maps));
  CsvWriter csv("component,members,energy_key");
  std::vector<std::size_t> members(set.k, 0);
  for (auto a : set.assignments) members[a]++;
  for (std::size_t i = 0; i < set.k; ++i) {
    csv.field(std::int64_t(i));
    csv.field(std::int64_t(members[i]));
    csv.field(set.ordering_key[i]);
    csv.endrow();
  }
  out.write("components.csv", csv.str());
  std::printf("rendered %zu component maps at %zux%zu\n", set.images.size(), pad, pad);
}

void cmd_gradcheck(const Config& c, RunWriter& out, bool single_precision) {
  const std::size_t instances = std::size_t(c.get_int("instances", 10));
  const double tol = c.get_double("tol", single_precision ? 1e-4 : 1e-6);
  auto results = ad::run_gradcheck_suite(instances, single_precision);
  CsvWriter csv("check,max_rel_err,tol,status");
  bool all_ok = true;
  for (const auto& r : results) {
    const bool ok = r.worst < tol;
    all_ok = all_ok && ok;
    csv.field(r.name);
    csv.field(r.worst);
    csv.field(tol);
    csv.field(ok ? "ok" : "FAIL");
    csv.endrow();
    std::printf("%-24s %.3e %s\n", r.name.c_str(), r.worst, ok ? "ok" : "FAIL");
  }
  out.write("gradcheck.csv", csv.str());
  out.finish("gradcheck", c);
  if (!all_ok)
    fail_numeric("gradient check failed: worst " +
                 std::to_string(ad::suite_worst(results)) + " exceeds tol");
  std::printf("all %zu checks under %.1e (%s precision)\n", results.size(), tol,
              single_precision ? "single" : "double");
}

template <class T>
void run_train(const Config& c, RunWriter& out, int n_threads) {
  auto sc = synth_cfg_from(c);
  auto backbone = backbone_from(c, sc.n_classes, sc.chip);
  if (!c.has("k_components")) sc.k_components = backbone.groups;
  require(sc.k_components == backbone.groups,
          "k_components must equal the attention group count");

  auto pool = ofa::build_pool<T>(sc);
  std::vector<std::size_t> labels(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) labels[i] = pool[i].label;
  const double fraction = c.get_double("train_fraction", 0.5);
  const std::uint64_t seed = std::uint64_t(c.get_int("seed", 1));
  auto split = ofa::make_splits(labels, fraction, Rng::child(seed, 0x5EED00).next_u64());
  std::vector<net::Sample<T>> train_set, val_set;
  for (auto i : split.train) train_set.push_back(pool[i]);
  for (auto i : split.val) val_set.push_back(pool[i]);

  net::TrainConfig tc;
  tc.lr = c.get_double("lr", tc.lr);
  tc.momentum = c.get_double("momentum", tc.momentum);
  tc.weight_decay = c.get_double("weight_decay", tc.weight_decay);
  tc.batch_size = std::size_t(c.get_int("batch", 8));
  tc.max_epochs = std::size_t(c.get_int("epochs", 4));
  tc.patience = std::size_t(c.get_int("patience", tc.max_epochs));
  tc.stop_when_val_perfect = c.get_bool("stop_when_val_perfect", true);
  tc.seed = Rng::child(seed, 0x7C0000).next_u64();
  tc.n_threads = n_threads;

  Rng init = Rng::child(seed, 0x171000);
  auto st = net::init_net<T>(backbone, init);
  auto res = net::train(st, backbone, train_set, val_set, tc);

  out.write("history.csv", net::history_csv(res.history));
  for (auto& [name, p] : st.named_params())
    out.write_skb("checkpoint/" + name + ".skb", to_skb(*p));
  std::string manifest;
  for (auto& [name, p] : st.named_params()) manifest += name + " " + name + ".skb\n";
  out.write("checkpoint/params.txt", manifest);
  std::string summary = "epochs_run " + std::to_string(res.epochs_run) + "\nbest_epoch " +
                        std::to_string(res.best_epoch) + "\nbest_val_acc " +
                        std::to_string(res.best_val_acc) + "\ntrain_chips " +
                        std::to_string(train_set.size()) + "\nval_chips " +
                        std::to_string(val_set.size()) + "\n";
  out.write("summary.txt", summary);
  std::printf("trained %zu epochs, best val acc %.4f (epoch %zu)\n", res.epochs_run,
              res.best_val_acc, res.best_epoch);
}

template <class T>
void run_eval(const Config& c, RunWriter& out, int n_threads) {
  ofa::HarnessConfig hc;
  hc.data = synth_cfg_from(c);
  // The harness needs chips in every test set.
  if (hc.data.variant_classes.empty()) hc.data.variant_classes = {0};
  if (hc.data.scaled_classes.empty()) hc.data.scaled_classes = {int(hc.data.n_classes) - 1};
  hc.backbone = backbone_from(c, hc.data.n_classes, hc.data.chip);
  if (!c.has("k_components")) hc.data.k_components = hc.backbone.groups;
  require(hc.data.k_components == hc.backbone.groups,
          "k_components must equal the attention group count");
  hc.train_fraction = c.get_double("train_fraction", 0.5);
  hc.repeats = std::size_t(c.get_int("repeats", 2));
  hc.with_baseline = c.get_bool("with_baseline", true);
  hc.seed = std::uint64_t(c.get_int("seed", 1));
  hc.tc.lr = c.get_double("lr", hc.tc.lr);
  hc.tc.momentum = c.get_double("momentum", hc.tc.momentum);
  hc.tc.weight_decay = c.get_double("weight_decay", hc.tc.weight_decay);
  hc.tc.batch_size = std::size_t(c.get_int("batch", 8));
  hc.tc.max_epochs = std::size_t(c.get_int("epochs", 3));
  hc.tc.patience = std::size_t(c.get_int("patience", hc.tc.max_epochs));
  hc.tc.n_threads = n_threads;

  auto res = ofa::run_harness<T>(hc);
  out.write("report.txt", ofa::report_text(res.report));
  out.write("report.csv", ofa::report_csv(res.report));
  for (std::size_t m = 0; m < res.report.models.size(); ++m)
    for (const auto& ev : res.report.evals[m]) {
      out.write("confusion_" + res.report.models[m] + "_" + ev.name + ".csv",
                ofa::confusion_csv(ev));
      out.write("azimuth_" + res.report.models[m] + "_" + ev.name + ".csv", ofa::azimuth_csv(ev));
    }
  for (std::size_t r = 0; r < res.piha_runs.size(); ++r)
    out.write("history_piha_r" + std::to_string(r) + ".csv",
              net::history_csv(res.piha_runs[r].history));
  for (std::size_t r = 0; r < res.baseline_runs.size(); ++r)
    out.write("history_baseline_r" + std::to_string(r) + ".csv",
              net::history_csv(res.baseline_runs[r].history));
  const std::size_t n_attn = std::size_t(c.get_int("attn_chips", 4));
  out.write("attention.csv",
            ofa::attention_csv(res.piha_states[0], hc.backbone, res.tests.ofa1, n_attn));
  std::fputs(ofa::report_text(res.report).c_str(), stdout);
}

template <class T>
void run_dump_attn(const Config& c, RunWriter& out) {
  auto sc = synth_cfg_from(c);
  auto backbone = backbone_from(c, sc.n_classes, sc.chip);
  if (!c.has("k_components")) sc.k_components = backbone.groups;
  require(sc.k_components == backbone.groups,
          "k_components must equal the attention group count");
  require(!backbone.piha_after_stage.empty(), "dump-attn needs at least one attention stage");

  auto pool = ofa::build_pool<T>(sc);
  const std::size_t n = std::min(pool.size(), std::size_t(c.get_int("chips", 4)));

  net::NetState<T> st;
  const std::string ckpt = c.get_str("checkpoint", "");
  if (!ckpt.empty()) {
    Rng init(0);
    st = net::init_net<T>(backbone, init);  // shapes, then overwritten
    net::load_checkpoint(ckpt, st);
  } else {
    Rng init = Rng::child(std::uint64_t(c.get_int("seed", 1)), 0x171000);
    st = net::init_net<T>(backbone, init);
  }
  out.write("attention.csv", ofa::attention_csv(st, backbone, pool, n));
  std::printf("dumped attention for %zu chips\n", n);
}

void cmd_mstar_split(const Config& c, RunWriter& out) {
  const std::string manifest = c.get_str("manifest", "");
  if (manifest.empty())
    fail_config("mstar-split needs a manifest: set manifest=PATH in the config");
  auto ix = mstar::index_manifest(mstar::load_manifest(manifest));

  auto paths = [&](const std::vector<std::size_t>& idx) {
    std::string s;
    for (auto i : idx) s += ix.entries[i].path + "\n";
    return s;
  };
  out.write("train.txt", paths(ix.train));
  out.write("standard.txt", paths(ix.ofa1));
  out.write("variant.txt", paths(ix.ofa2));
  out.write("depression.txt", paths(ix.ofa3));
  CsvWriter labels("relative_path,label,class");
  for (std::size_t i = 0; i < ix.entries.size(); ++i) {
    labels.field(ix.entries[i].path);
    labels.field(std::int64_t(ix.labels[i]));
    labels.field(ix.entries[i].target);
    labels.endrow();
  }
  out.write("labels.csv", labels.str());
  out.write("verify_report.txt", mstar::verify_report(ix));
  std::printf("indexed %zu chips: %zu train, %zu standard, %zu variant, %zu depression\n",
              ix.entries.size(), ix.train.size(), ix.ofa1.size(), ix.ofa2.size(),
              ix.ofa3.size());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scatterkit: scattering-center simulation, estimation and recognition"};
  app.require_subcommand(1);

  std::string config_path, out_dir, precision = "double";
  long long seed = -1;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--out", out_dir, "output directory (default out/<subcommand>)");
    sub->add_option("--threads", threads, "worker threads (0 = auto)");
    sub->add_option("--precision", precision, "single or double")
        ->check(CLI::IsMember({"single", "double"}));
  };

  auto* s_synth = app.add_subcommand("synth", "synthesize a labeled chip pool");
  auto* s_fit = app.add_subcommand("fit-asc", "estimate scattering centers from a spectrum");
  auto* s_cluster = app.add_subcommand("cluster", "group a target's centers into components");
  auto* s_render = app.add_subcommand("render-components", "render per-component images");
  auto* s_grad = app.add_subcommand("gradcheck", "finite-difference check of every op");
  auto* s_train = app.add_subcommand("train", "train a recognition model on synthetic chips");
  auto* s_eval = app.add_subcommand("eval", "paired condition-shift evaluation");
  auto* s_mstar = app.add_subcommand("mstar-split", "index a measured-corpus manifest");
  auto* s_attn = app.add_subcommand("dump-attn", "write attention weights for a few chips");
  for (auto* s : {s_synth, s_fit, s_cluster, s_render, s_grad, s_train, s_eval, s_mstar, s_attn})
    add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;  // help exits clean, bad usage exits 2
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg = Config::from_file(config_path);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (threads > 0) cfg.set("threads", std::to_string(threads));
    const bool single = precision == "single";
    cfg.set("precision", precision);
    const int n_threads = threads > 0 ? threads : int(cfg.get_int("threads", 0));

    auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (out_dir.empty()) out_dir = "out/" + name;
    RunWriter out(out_dir);

    if (name == "synth") {
      cmd_synth(cfg, out);
    } else if (name == "fit-asc") {
      cmd_fit_asc(cfg, out, n_threads);
    } else if (name == "cluster") {
      cmd_cluster(cfg, out);
    } else if (name == "render-components") {
      cmd_render_components(cfg, out);
    } else if (name == "gradcheck") {
      cmd_gradcheck(cfg, out, single);  // finishes its own manifest before verdict
      return 0;
    } else if (name == "train") {
      single ? run_train<float>(cfg, out, n_threads) : run_train<double>(cfg, out, n_threads);
    } else if (name == "eval") {
      single ? run_eval<float>(cfg, out, n_threads) : run_eval<double>(cfg, out, n_threads);
    } else if (name == "mstar-split") {
      cmd_mstar_split(cfg, out);
    } else if (name == "dump-attn") {
      single ? run_dump_attn<float>(cfg, out) : run_dump_attn<double>(cfg, out);
    }
    out.finish(name, cfg);
    return 0;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.category_name(), e.what());
    return e.category() == ErrorCategory::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
}
