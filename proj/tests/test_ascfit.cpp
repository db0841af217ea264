#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <limits>
#include <set>

#include <Eigen/Dense>

#include "scatterkit/ascfit.hpp"
#include "scatterkit/serialize.hpp"

using namespace sk;
using namespace sk::ascfit;
using namespace sk::radar;
using Catch::Approx;

namespace {

RadarConfig small_cfg() {
  RadarConfig cfg;
  cfg.n_freq = 16;
  cfg.n_aspect = 16;
  return cfg;
}

// localized-only dictionary with nx*ny positions
AtomTable grid_table(const RadarConfig& cfg, std::size_t nx, std::size_t ny) {
  DictionaryConfig d;
  d.alpha_values = {0.0};
  d.length_values = {0.0};
  d.x_step = cfg.extent_range() / double(nx);
  d.y_step = cfg.extent_crossrange() / double(ny);
  return AtomTable(cfg, d);
}

Spectrum from_atoms(const AtomTable& t, const std::vector<std::pair<std::size_t, cd>>& parts) {
  std::vector<ScatterCenter> cs;
  for (auto& [i, A] : parts) {
    ScatterCenter c = t.unit_center(i);
    c.amplitude_re = A.real();
    c.amplitude_im = A.imag();
    cs.push_back(c);
  }
  return evaluate_spectrum(cs, t.cfg());
}

// exhaustive least-squares over every q-subset of the table
std::pair<std::vector<std::size_t>, double> exhaustive_ls(const AtomTable& t,
                                                          const Spectrum& spec, std::size_t q) {
  const std::size_t N = t.size(), S = t.samples();
  Eigen::VectorXcd b(S);
  for (std::size_t s = 0; s < S; ++s) b[s] = spec.data.v[s];
  std::vector<Eigen::VectorXcd> cols(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto c = t.column(i);
    cols[i] = Eigen::Map<Eigen::VectorXcd>(c.data(), Eigen::Index(S));
  }
  std::vector<std::size_t> best;
  double best_resid = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(q);
  auto rec = [&](auto&& self, std::size_t depth, std::size_t start) -> void {
    if (depth == q) {
      Eigen::MatrixXcd Phi(S, q);
      for (std::size_t j = 0; j < q; ++j) Phi.col(Eigen::Index(j)) = cols[pick[j]];
      Eigen::VectorXcd a = Phi.colPivHouseholderQr().solve(b);
      double r = (b - Phi * a).norm();
      if (r < best_resid) {
        best_resid = r;
        best = pick;
      }
      return;
    }
    for (std::size_t i = start; i + (q - depth - 1) < N; ++i) {
      pick[depth] = i;
      self(self, depth + 1, i + 1);
    }
  };
  rec(rec, 0, 0);
  return {best, best_resid};
}

}  // namespace

TEST_CASE("dictionary cartesian product and atom count", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 2, 2);
  CHECK(t.size() == 4);
  CHECK(t.nx() == 2);
  CHECK(t.ny() == 2);

  // alpha -> L -> phi_bar -> y -> x enumeration
  DictionaryConfig d;
  d.alpha_values = {0.0, 1.0};
  d.length_values = {0.0, 2.0};
  d.phi_bar_values = {-0.1, 0.1};
  d.x_step = cfg.extent_range() / 2.0;
  d.y_step = cfg.extent_crossrange() / 2.0;
  AtomTable t2(cfg, d);
  // combos: (0,0), (0,2,-0.1), (0,2,0.1), (1,0), (1,2,-0.1), (1,2,0.1) = 6
  CHECK(t2.size() == 6 * 4);
  auto p0 = t2.params(0);
  CHECK(p0.alpha == 0.0);
  CHECK(p0.length == 0.0);
  CHECK(p0.x == Approx(-cfg.extent_range() / 2));
  auto p1 = t2.params(1);
  CHECK(p1.x == Approx(0.0).margin(1e-12));  // x varies fastest
  auto plast = t2.params(t2.size() - 1);
  CHECK(plast.alpha == 1.0);
  CHECK(plast.length == 2.0);
  CHECK(plast.phi_bar == 0.1);
}

TEST_CASE("atom columns are unit norm; origin atom is the constant", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 2, 2);
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto col = t.column(i);
    double n2 = 0;
    for (auto& v : col) n2 += std::norm(v);
    CHECK(std::sqrt(n2) == Approx(1.0).epsilon(1e-12));
  }
  // lattice {-ext/2, 0}: index 3 = (ix=1, iy=1) = origin
  auto p = t.params(3);
  REQUIRE(p.x == Approx(0.0).margin(1e-12));
  REQUIRE(p.y == Approx(0.0).margin(1e-12));
  auto col = t.column(3);
  double want = 1.0 / std::sqrt(double(t.samples()));
  for (auto& v : col) {
    CHECK(v.real() == Approx(want).epsilon(1e-12));
    CHECK(std::abs(v.imag()) < 1e-12);
  }
}

TEST_CASE("dictionary cap and validation", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  DictionaryConfig d;
  d.x_step = cfg.extent_range() / 4096.0;
  d.y_step = cfg.extent_crossrange() / 4096.0;
  CHECK_THROWS_AS(AtomTable(cfg, d), Error);  // 4096^2 * 50 atoms >> cap

  DictionaryConfig bad;
  bad.x_step = 0;
  bad.y_step = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.x_step = 1;
  bad.alpha_values = {0.3};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.alpha_values = {0.0};
  bad.length_values = {1.0};
  bad.phi_bar_values = {};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pixel-aligned default table has the documented shape", "[ascfit]") {
  RadarConfig cfg;  // 64x64 default grid
  auto d = DictionaryConfig::pixel_aligned(cfg, 128);
  CHECK(d.x_step == Approx(cfg.extent_range() / 128.0));
  AtomTable t(cfg, d);
  CHECK(t.nx() == 128);
  CHECK(t.ny() == 128);
  CHECK(t.n_combos() == 50);  // 5 alphas x (1 localized + 3 lengths x 3 orientations)
  CHECK(t.size() == 819200);
}

TEST_CASE("exact one-sparse recovery", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 4, 4);
  const std::size_t pick = 9;
  auto spec = from_atoms(t, {{pick, cd{2.0, 0.0}}});
  auto fit = omp_fit(spec, t, 5, 1e-10);
  REQUIRE(fit.iterations == 1);
  REQUIRE(fit.centers.size() == 1);
  auto p = t.params(pick);
  CHECK(fit.centers[0].x == Approx(p.x).margin(1e-12));
  CHECK(fit.centers[0].y == Approx(p.y).margin(1e-12));
  CHECK(fit.centers[0].amplitude_re == Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(fit.centers[0].amplitude_im) < 1e-9);
  CHECK(fit.residual_norm < 1e-9);
}

TEST_CASE("zero spectrum yields the empty fit", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 4, 4);
  Spectrum spec;
  spec.cfg = cfg;
  spec.data = CMat(Shape{cfg.n_freq, cfg.n_aspect});
  auto fit = omp_fit(spec, t, 5, 0.1);
  CHECK(fit.centers.empty());
  CHECK(fit.residual_norm == 0.0);
  CHECK(fit.iterations == 0);
}

TEST_CASE("three-atom recovery matches exhaustive least squares", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 6, 5);  // 30 atoms
  REQUIRE(t.size() <= 200);
  // indices chosen well separated on the 6x5 position grid
  std::vector<std::pair<std::size_t, cd>> truth = {
      {0, cd{3.0, 0.0}}, {15, cd{0.0, 2.0}}, {29, cd{-1.0, 0.0}}};
  auto spec = from_atoms(t, truth);
  auto fit = omp_fit(spec, t, 3, 0.0);
  REQUIRE(fit.centers.size() == 3);

  std::set<std::size_t> got;
  for (const auto& c : fit.centers)
    for (std::size_t i = 0; i < t.size(); ++i) {
      auto p = t.params(i);
      if (std::abs(p.x - c.x) < 1e-9 && std::abs(p.y - c.y) < 1e-9 && p.alpha == c.alpha &&
          p.length == c.length)
        got.insert(i);
    }
  CHECK(got == std::set<std::size_t>{0, 15, 29});

  for (const auto& [idx, A] : truth)
    for (const auto& c : fit.centers) {
      auto p = t.params(idx);
      if (std::abs(p.x - c.x) < 1e-9 && std::abs(p.y - c.y) < 1e-9) {
        CHECK(std::abs(c.amplitude() - A) / std::abs(A) < 1e-6);
      }
    }

  auto [best_set, best_resid] = exhaustive_ls(t, spec, 3);
  CHECK(std::set<std::size_t>(best_set.begin(), best_set.end()) == got);
  CHECK(fit.residual_norm <= best_resid + 1e-9);
}

TEST_CASE("residual history is monotone and atoms never repeat", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 5, 5);
  Rng rng(23);
  Spectrum spec;
  spec.cfg = cfg;
  spec.data = CMat(Shape{cfg.n_freq, cfg.n_aspect});
  for (auto& v : spec.data.v) v = cd{rng.normal(), rng.normal()};
  auto fit = omp_fit(spec, t, 10, 0.0);
  REQUIRE(fit.residual_history.size() == fit.iterations);
  double prev = std::numeric_limits<double>::infinity();
  for (double r : fit.residual_history) {
    CHECK(r <= prev + 1e-12);
    prev = r;
  }
  std::set<std::pair<double, double>> seen;
  for (const auto& c : fit.centers) {
    auto key = std::make_pair(c.x, c.y);
    bool dup = seen.count(key) && [&] {
      for (const auto& o : fit.centers)
        if (o.x == c.x && o.y == c.y && &o != &c && o.alpha == c.alpha && o.length == c.length)
          return true;
      return false;
    }();
    CHECK_FALSE(dup);
    seen.insert(key);
  }
}

TEST_CASE("refit of a fitted spectrum recovers the same atoms", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 5, 4);
  auto spec = from_atoms(t, {{2, cd{2.5, 1.0}}, {13, cd{0.5, -1.5}}});
  auto fit1 = omp_fit(spec, t, 2, 0.0);
  REQUIRE(fit1.centers.size() == 2);
  auto respec = evaluate_spectrum(fit1.centers, cfg);
  auto fit2 = omp_fit(respec, t, 2, 0.0);
  REQUIRE(fit2.centers.size() == 2);
  auto key = [](const ScatterCenter& c) { return std::make_pair(c.x, c.y); };
  std::set<std::pair<double, double>> s1, s2;
  for (auto& c : fit1.centers) s1.insert(key(c));
  for (auto& c : fit2.centers) s2.insert(key(c));
  CHECK(s1 == s2);
}

TEST_CASE("fit is bit-identical across thread counts", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 6, 6);
  Rng rng(31);
  Spectrum spec;
  spec.cfg = cfg;
  spec.data = CMat(Shape{cfg.n_freq, cfg.n_aspect});
  for (auto& v : spec.data.v) v = cd{rng.normal(), rng.normal()};
  auto f1 = omp_fit(spec, t, 6, 0.0, 1);
  auto f4 = omp_fit(spec, t, 6, 0.0, 4);
  REQUIRE(f1.centers.size() == f4.centers.size());
  for (std::size_t i = 0; i < f1.centers.size(); ++i) {
    CHECK(f1.centers[i].x == f4.centers[i].x);
    CHECK(f1.centers[i].y == f4.centers[i].y);
    CHECK(f1.centers[i].amplitude_re == f4.centers[i].amplitude_re);
    CHECK(f1.centers[i].amplitude_im == f4.centers[i].amplitude_im);
  }
  CHECK(f1.residual_norm == f4.residual_norm);
}

TEST_CASE("factored scan agrees with naive per-atom correlation", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  DictionaryConfig d;
  d.alpha_values = {0.0, 0.5};
  d.length_values = {0.0, 1.5};
  d.phi_bar_values = {-0.05, 0.05};
  d.x_step = cfg.extent_range() / 4.0;
  d.y_step = cfg.extent_crossrange() / 4.0;
  AtomTable t(cfg, d);
  Rng rng(57);
  std::vector<cd> r(t.samples());
  for (auto& v : r) v = cd{rng.normal(), rng.normal()};
  auto [idx, score] = t.best_match(r, 2);

  std::size_t naive_idx = 0;
  double naive_best = -1;
  for (std::size_t i = 0; i < t.size(); ++i) {
    auto col = t.column(i);
    cd acc{0, 0};
    for (std::size_t s = 0; s < r.size(); ++s) acc += std::conj(col[s]) * r[s];
    if (std::abs(acc) > naive_best) {
      naive_best = std::abs(acc);
      naive_idx = i;
    }
  }
  CHECK(idx == naive_idx);
  CHECK(score == Approx(naive_best).epsilon(1e-10));
}

TEST_CASE("fit result serialization round-trip", "[ascfit][io]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 4, 4);
  auto spec = from_atoms(t, {{5, cd{1.5, 0.5}}});
  auto fit = omp_fit(spec, t, 2, 1e-10);
  std::string path = "/tmp/sk_test_fit.jsonl";
  write_fit_jsonl(path, fit);
  auto rt = read_fit_jsonl(path);
  REQUIRE(rt.centers.size() == fit.centers.size());
  CHECK(rt.centers[0].x == fit.centers[0].x);
  CHECK(rt.centers[0].amplitude_re == fit.centers[0].amplitude_re);
  CHECK(rt.residual_norm == fit.residual_norm);
  CHECK(rt.iterations == fit.iterations);
  CHECK(rt.rank_warning == fit.rank_warning);
  std::filesystem::remove(path);
}

TEST_CASE("parameter validation on omp_fit", "[ascfit]") {
  RadarConfig cfg = small_cfg();
  AtomTable t = grid_table(cfg, 2, 2);
  Spectrum spec = from_atoms(t, {{0, cd{1, 0}}});
  CHECK_THROWS_AS(omp_fit(spec, t, 0, 0.1), Error);
  CHECK_THROWS_AS(omp_fit(spec, t, 3, 1.0), Error);
  CHECK_THROWS_AS(omp_fit(spec, t, 3, -0.1), Error);
}
