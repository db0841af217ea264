#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "scatterkit/net.hpp"

using namespace sk;
using namespace sk::net;

namespace {

// Two-stage toy backbone: 8x8 input, attention after the second pool.
BackboneConfig tiny_cfg(std::size_t n_classes = 3) {
  BackboneConfig cfg;
  cfg.stage_channels = {4, 8};
  cfg.first_kernel = 3;
  cfg.later_kernel = 3;
  cfg.piha_after_stage = {1};
  cfg.groups = 2;
  cfg.se_reduction = 2;
  cfg.sse_reduction = 2;
  cfg.n_classes = n_classes;
  cfg.input_hw = 8;
  return cfg;
}

std::vector<Tensor<double>> half_masks(std::size_t hw) {
  Tensor<double> left(Shape{hw, hw}), right(Shape{hw, hw});
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t j = 0; j < hw; ++j)
      (j < hw / 2 ? left : right).at(i, j) = 1.0;
  return {left, right};
}

// Class c gets a bright 3x3 block in a class-specific corner over faint noise.
template <class T>
Sample<T> make_sample(Rng& rng, std::size_t label, std::size_t hw, int idx) {
  Sample<T> s;
  s.chip = Tensor<T>(Shape{hw, hw});
  for (auto& v : s.chip.v) v = T(0.1 * rng.uniform01());
  const std::size_t r0 = (label % 2) ? hw - 4 : 1;
  const std::size_t c0 = (label / 2 % 2) ? hw - 4 : 1;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      s.chip.at(r0 + i, c0 + j) = T(0.8 + 0.2 * rng.uniform01());
  if (label == 2) {  // third class: center block instead of a corner
    s.chip = Tensor<T>(Shape{hw, hw});
    for (auto& v : s.chip.v) v = T(0.1 * rng.uniform01());
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        s.chip.at(hw / 2 - 1 + i, hw / 2 - 1 + j) = T(0.8 + 0.2 * rng.uniform01());
  }
  s.comps = half_masks(hw);
  s.label = label;
  s.azimuth_deg = rng.uniform(0.0, 360.0);
  s.id = "chip_" + std::to_string(idx);
  return s;
}

template <class T>
std::vector<Sample<T>> make_set(Rng& rng, std::size_t n_classes, std::size_t per_class,
                                std::size_t hw) {
  std::vector<Sample<T>> out;
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      out.push_back(make_sample<T>(rng, c, hw, int(out.size())));
  return out;
}

template <class T>
std::vector<Tensor<T>> snapshot(NetState<T>& st) {
  std::vector<Tensor<T>> out;
  for (auto& [name, p] : st.named_params()) out.push_back(*p);
  return out;
}

template <class T>
bool bit_equal(NetState<T>& a, NetState<T>& b) {
  auto pa = a.named_params(), pb = b.named_params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].second->shape != pb[i].second->shape) return false;
    for (std::size_t j = 0; j < pa[i].second->numel(); ++j)
      if (pa[i].second->v[j] != pb[i].second->v[j]) return false;
  }
  return true;
}

std::string temp_dir(const char* tag) {
  auto d = std::filesystem::temp_directory_path() / (std::string("sk_net_") + tag);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d.string();
}

}  // namespace

TEST_CASE("backbone and train configs reject bad values", "[net]") {
  auto cfg = tiny_cfg();
  REQUIRE_NOTHROW(cfg.validate());

  auto even = cfg;
  even.first_kernel = 4;
  REQUIRE_THROWS_AS(even.validate(), Error);

  auto oob = cfg;
  oob.piha_after_stage = {5};
  REQUIRE_THROWS_AS(oob.validate(), Error);

  auto small = cfg;
  small.input_hw = 2;  // second pool has nothing left to pool
  REQUIRE_THROWS_AS(small.validate(), Error);

  auto indivisible = cfg;
  indivisible.stage_channels = {4, 6};  // 6 % 2 == 0 is fine; force a clash
  indivisible.groups = 4;
  REQUIRE_THROWS_AS(indivisible.validate(), Error);

  auto one_class = cfg;
  one_class.n_classes = 1;
  REQUIRE_THROWS_AS(one_class.validate(), Error);

  TrainConfig tc;
  REQUIRE_NOTHROW(tc.validate());
  auto bad = tc;
  bad.lr = -1.0;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = tc;
  bad.momentum = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = tc;
  bad.patience = tc.max_epochs + 1;
  REQUIRE_THROWS_AS(bad.validate(), Error);
  bad = tc;
  bad.batch_size = 0;
  REQUIRE_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("initialization is seeded, bounded, and zero-biased", "[net]") {
  auto cfg = tiny_cfg();
  Rng r1(77), r2(77), r3(78);
  auto a = init_net<double>(cfg, r1);
  auto b = init_net<double>(cfg, r2);
  auto c = init_net<double>(cfg, r3);
  REQUIRE(bit_equal(a, b));
  REQUIRE_FALSE(bit_equal(a, c));

  REQUIRE(a.conv_w[0].shape == Shape{4, 1, 3, 3});
  REQUIRE(a.conv_w[1].shape == Shape{8, 4, 3, 3});
  REQUIRE(a.head_w.shape == Shape{3, 8});
  REQUIRE(a.piha.size() == 1);

  for (const auto& bias : a.conv_b)
    for (double v : bias.v) REQUIRE(v == 0.0);
  for (double v : a.head_b.v) REQUIRE(v == 0.0);

  const double bound0 = std::sqrt(6.0 / (1 * 3 * 3));
  for (double v : a.conv_w[0].v) REQUIRE(std::abs(v) <= bound0);
  const double boundh = std::sqrt(6.0 / 8.0);
  for (double v : a.head_w.v) REQUIRE(std::abs(v) <= boundh);
}

TEST_CASE("zero classifier head yields uniform scores", "[net]") {
  auto cfg = tiny_cfg(3);
  Rng rng(5);
  auto st = init_net<double>(cfg, rng);
  st.head_w = Tensor<double>(st.head_w.shape);
  st.head_b = Tensor<double>(st.head_b.shape);

  auto batch = make_set<double>(rng, 3, 2, cfg.input_hw);
  auto scores = predict_scores(st, cfg, batch);
  REQUIRE(scores.shape == Shape{6, 3});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      REQUIRE(scores.at(i, c) == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("score rows are a distribution and duplicates agree", "[net]") {
  auto cfg = tiny_cfg(3);
  Rng rng(9);
  auto st = init_net<double>(cfg, rng);
  auto batch = make_set<double>(rng, 3, 3, cfg.input_hw);
  batch[4] = batch[1];  // duplicate chip in a different slot

  auto scores = predict_scores(st, cfg, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      REQUIRE(scores.at(i, c) >= 0.0);
      sum += scores.at(i, c);
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
  }
  for (std::size_t c = 0; c < 3; ++c)
    REQUIRE(scores.at(4, c) == scores.at(1, c));

  // batch order preserved and thread-count independent
  auto single = predict_scores(st, cfg, {batch[7]}, 1);
  auto wide = predict_scores(st, cfg, batch, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    REQUIRE(wide.at(7, c) == scores.at(7, c));
    REQUIRE(single.at(0, c) == scores.at(7, c));
  }
}

TEST_CASE("a single sample is memorized within 500 epochs", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(21);
  auto st = init_net<double>(cfg, rng);
  std::vector<Sample<double>> one = {make_sample<double>(rng, 1, cfg.input_hw, 0)};

  TrainConfig tc;
  tc.max_epochs = 500;
  tc.patience = 500;
  tc.seed = 3;
  auto res = train(st, cfg, one, one, tc);
  REQUIRE(res.epochs_run == 500);
  REQUIRE(res.history.back().train_loss < 1e-3);
  REQUIRE(res.best_val_acc == 1.0);
}

TEST_CASE("zero learning rate leaves weights untouched", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(31);
  auto st = init_net<double>(cfg, rng);
  auto before = snapshot(st);

  auto data = make_set<double>(rng, 3, 4, cfg.input_hw);
  TrainConfig tc;
  tc.lr = 0.0;  // weight decay must flow through the update, so it is inert too
  tc.max_epochs = 3;
  tc.patience = 3;
  train(st, cfg, data, data, tc);

  auto after = snapshot(st);
  for (std::size_t p = 0; p < before.size(); ++p)
    for (std::size_t i = 0; i < before[p].numel(); ++i)
      REQUIRE(before[p].v[i] == after[p].v[i]);
}

TEST_CASE("training is deterministic across runs and thread counts", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng seed_rng(41);
  auto data = make_set<double>(seed_rng, 3, 4, cfg.input_hw);
  std::vector<Sample<double>> val(data.begin(), data.begin() + 3);

  auto run = [&](int threads) {
    Rng rng(99);
    auto st = init_net<double>(cfg, rng);
    TrainConfig tc;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.seed = 7;
    tc.n_threads = threads;
    auto res = train(st, cfg, data, val, tc);
    return std::make_pair(std::move(st), res);
  };

  auto [st1, r1] = run(1);
  auto [st4, r4] = run(4);
  REQUIRE(r1.history.size() == r4.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    REQUIRE(r1.history[e].train_loss == r4.history[e].train_loss);
    REQUIRE(r1.history[e].val_acc == r4.history[e].val_acc);
  }
  REQUIRE(bit_equal(st1, st4));

  auto [st1b, r1b] = run(1);
  REQUIRE(bit_equal(st1, st1b));
  REQUIRE(r1.history[0].train_loss == r1b.history[0].train_loss);
}

TEST_CASE("returned weights match the best validation epoch", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(55);
  auto train_set = make_set<double>(rng, 3, 4, cfg.input_hw);
  auto val_set = make_set<double>(rng, 3, 2, cfg.input_hw);
  auto st = init_net<double>(cfg, rng);

  TrainConfig tc;
  tc.lr = 0.05;  // deliberately jumpy so validation accuracy fluctuates
  tc.max_epochs = 8;
  tc.patience = 8;
  auto res = train(st, cfg, train_set, val_set, tc);

  double best = 0.0;
  for (const auto& h : res.history) best = std::max(best, h.val_acc);
  REQUIRE(res.best_val_acc == best);
  REQUIRE(accuracy(st, cfg, val_set) == res.best_val_acc);
}

TEST_CASE("patience stops a run that cannot improve", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(65);
  auto data = make_set<double>(rng, 3, 2, cfg.input_hw);
  auto st = init_net<double>(cfg, rng);

  TrainConfig tc;
  tc.lr = 0.0;  // validation accuracy is frozen at its epoch-0 value
  tc.max_epochs = 50;
  tc.patience = 3;
  auto res = train(st, cfg, data, data, tc);
  REQUIRE(res.epochs_run == 4);  // epoch 0 sets the best; three stale epochs follow
  REQUIRE(res.best_epoch == 0);
}

TEST_CASE("perfect-validation shortcut stops at the first solved epoch", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(75);
  auto data = make_set<double>(rng, 3, 6, cfg.input_hw);
  std::vector<Sample<double>> val(data.begin(), data.begin() + 2);  // easy to solve
  auto st = init_net<double>(cfg, rng);

  TrainConfig tc;
  tc.max_epochs = 200;
  tc.patience = 200;
  tc.stop_when_val_perfect = true;
  auto res = train(st, cfg, data, val, tc);
  if (res.best_val_acc == 1.0) REQUIRE(res.epochs_run == res.best_epoch + 1);
  REQUIRE(res.epochs_run <= 200);
}

TEST_CASE("a small classful problem is learned", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(85);
  auto train_set = make_set<double>(rng, 3, 12, cfg.input_hw);
  auto val_set = make_set<double>(rng, 3, 4, cfg.input_hw);
  auto st = init_net<double>(cfg, rng);

  TrainConfig tc;
  tc.max_epochs = 60;
  tc.patience = 60;
  tc.seed = 11;
  auto res = train(st, cfg, train_set, val_set, tc);
  REQUIRE(res.best_val_acc >= 0.9);
  REQUIRE(res.history.front().train_loss > res.history.back().train_loss);
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[net][train]") {
  auto cfg = tiny_cfg(3);
  Rng rng(95);
  auto data = make_set<double>(rng, 3, 2, cfg.input_hw);
  auto st = init_net<double>(cfg, rng);

  TrainConfig tc;
  tc.lr = 1e12;  // divergence on the first batches
  tc.max_epochs = 20;
  tc.patience = 20;
  REQUIRE_THROWS_WITH(train(st, cfg, data, data, tc),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("checkpoints round-trip bit-exactly in single precision", "[net][io]") {
  auto cfg = tiny_cfg(3);
  Rng rng(105);
  auto st = init_net<float>(cfg, rng);
  auto dir = temp_dir("ckpt");
  save_checkpoint(dir, st);

  Rng rng2(205);
  auto other = init_net<float>(cfg, rng2);
  REQUIRE_FALSE(bit_equal(st, other));
  load_checkpoint(dir, other);
  REQUIRE(bit_equal(st, other));

  REQUIRE(std::filesystem::exists(dir + "/params.txt"));
  REQUIRE(std::filesystem::exists(dir + "/head.w.skb"));

  auto wrong = tiny_cfg(4);  // head shape differs
  Rng rng3(305);
  auto bad = init_net<float>(wrong, rng3);
  REQUIRE_THROWS_WITH(load_checkpoint(dir, bad),
                      Catch::Matchers::ContainsSubstring("shape mismatch"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("history serializes to the expected csv layout", "[net][io]") {
  std::vector<EpochStat> h = {{0, 1.5, 0.25}, {1, 0.75, 0.5}};
  auto csv = history_csv(h);
  REQUIRE(csv == "epoch,train_loss,val_acc\n0,1.5,0.25\n1,0.75,0.5\n");
}

TEST_CASE("baseline backbone without attention stages trains too", "[net][train]") {
  auto cfg = tiny_cfg(3);
  cfg.piha_after_stage.clear();
  REQUIRE_NOTHROW(cfg.validate());
  Rng rng(115);
  auto st = init_net<double>(cfg, rng);
  REQUIRE(st.piha.empty());

  auto data = make_set<double>(rng, 3, 4, cfg.input_hw);
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.patience = 5;
  auto res = train(st, cfg, data, data, tc);
  REQUIRE(res.epochs_run >= 1);
  REQUIRE(std::isfinite(res.history.back().train_loss));
}
