#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <filesystem>

#include "scatterkit/radar.hpp"
#include "scatterkit/serialize.hpp"

using namespace sk;
using namespace sk::radar;
using Catch::Approx;

namespace {

RadarConfig default_cfg() { return RadarConfig{}; }

std::pair<std::size_t, std::size_t> argmax_pixel(const RMat& img) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < img.numel(); ++i)
    if (img.v[i] > img.v[best]) best = i;
  return {best / img.shape[1], best % img.shape[1]};
}

}  // namespace

TEST_CASE("grid geometry and extents", "[radar]") {
  RadarConfig cfg = default_cfg();
  cfg.validate();
  CHECK(cfg.freq_step() == Approx(0.59e9 / 64.0));
  // centered sampling: index n_freq/2 sits exactly on the carrier
  CHECK(cfg.freq_at(32) == Approx(9.6e9));
  CHECK(cfg.aspect_at(32) == Approx(0.0).margin(1e-15));
  CHECK(cfg.freq_at(0) == Approx(9.6e9 - 32.0 * cfg.freq_step()));
  // hand-computed from c*n/(2B) and c*n/(2 f_c span)
  CHECK(cfg.extent_range() == Approx(16.2598).epsilon(1e-4));
  CHECK(cfg.extent_crossrange() == Approx(19.0852).epsilon(1e-4));

  RadarConfig bad = cfg;
  bad.n_freq = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.bandwidth = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("unit scatterer at origin gives unit spectrum", "[radar]") {
  ScatterCenter c;  // A=1, origin, alpha=0, L=0, gamma=0
  auto spec = evaluate_spectrum({c}, default_cfg());
  for (std::size_t i = 0; i < spec.data.numel(); ++i) {
    CHECK(std::abs(spec.data.v[i] - cd{1.0, 0.0}) < 1e-14);
  }
}

TEST_CASE("isolated point target phase matches closed form", "[radar]") {
  RadarConfig cfg = default_cfg();
  ScatterCenter c;
  c.x = 1.75;
  auto spec = evaluate_spectrum({c}, cfg);
  for (std::size_t m = 0; m < cfg.n_freq; m += 7) {
    for (std::size_t n = 0; n < cfg.n_aspect; n += 5) {
      double f = cfg.freq_at(m), phi = cfg.aspect_at(n);
      CHECK(std::abs(spec.data.at(m, n)) == Approx(1.0).epsilon(1e-12));
      double want = -4.0 * kPi * f / cfg.c * c.x * std::cos(phi);
      cd expect{std::cos(want), std::sin(want)};
      CHECK(std::abs(spec.data.at(m, n) - expect) < 1e-12);
    }
  }
}

TEST_CASE("frequency dependence and quarter-phase factor", "[radar]") {
  RadarConfig cfg = default_cfg();
  ScatterCenter c;
  c.alpha = 1.0;
  auto spec = evaluate_spectrum({c}, cfg);
  // at the carrier sample the response is exactly j^1 * 1
  cd at_fc = spec.data.at(32, 32);
  CHECK(std::abs(at_fc - cd{0.0, 1.0}) < 1e-12);
  // away from it the magnitude scales like (f/fc)^alpha
  double f0 = cfg.freq_at(5);
  CHECK(std::abs(spec.data.at(5, 32)) == Approx(f0 / cfg.center_freq).epsilon(1e-12));

  c.alpha = 0.5;
  auto spec2 = evaluate_spectrum({c}, cfg);
  cd half = spec2.data.at(32, 32);
  CHECK(half.real() == Approx(std::cos(kPi / 4)).epsilon(1e-12));
  CHECK(half.imag() == Approx(std::sin(kPi / 4)).epsilon(1e-12));
}

TEST_CASE("superposition is exact to machine precision", "[radar]") {
  RadarConfig cfg = default_cfg();
  Rng rng(41);
  std::vector<ScatterCenter> a, b, both;
  for (int i = 0; i < 4; ++i) {
    ScatterCenter c;
    c.amplitude_re = rng.uniform(-2, 2);
    c.amplitude_im = rng.uniform(-2, 2);
    c.x = rng.uniform(-5, 5);
    c.y = rng.uniform(-5, 5);
    c.alpha = (i % 2) ? 0.5 : -0.5;
    c.length = (i < 2) ? 1.2 : 0.0;
    c.phi_bar = 0.01 * i;
    (i % 2 ? a : b).push_back(c);
    both.push_back(c);
  }
  auto sa = evaluate_spectrum(a, cfg), sb = evaluate_spectrum(b, cfg),
       sc = evaluate_spectrum(both, cfg);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < sc.data.numel(); ++i) {
    worst = std::max(worst, std::abs(sc.data.v[i] - (sa.data.v[i] + sb.data.v[i])));
    scale = std::max(scale, std::abs(sc.data.v[i]));
  }
  CHECK(worst / scale < 1e-12);
}

TEST_CASE("distributed center: sinc behavior", "[radar]") {
  CHECK(sinc(0.0) == 1.0);
  CHECK(sinc(1e-9) == Approx(1.0).epsilon(1e-15));
  CHECK(sinc(0.5) == Approx(std::sin(0.5) / 0.5).epsilon(1e-14));

  // at broadside (phi == phi_bar) the length term drops out entirely
  RadarConfig cfg = default_cfg();
  ScatterCenter c;
  c.length = 2.5;
  c.phi_bar = cfg.aspect_at(40);
  auto spec = evaluate_spectrum({c}, cfg);
  CHECK(std::abs(spec.data.at(10, 40)) == Approx(1.0).epsilon(1e-12));
  // off broadside it attenuates by exactly sinc(2 pi L/c f sin(dphi))
  double f = cfg.freq_at(10), phi = cfg.aspect_at(4);
  double t = 2.0 * kPi * c.length / cfg.c * f * std::sin(phi - c.phi_bar);
  CHECK(std::abs(spec.data.at(10, 4)) == Approx(std::abs(sinc(t))).epsilon(1e-12));
}

TEST_CASE("aspect dependency term conventions", "[radar]") {
  RadarConfig cfg = default_cfg();
  ScatterCenter c;
  c.gamma = 1e-11;
  auto grow = evaluate_spectrum({c}, cfg, AspectTerm::AsPrinted);
  auto damp = evaluate_spectrum({c}, cfg, AspectTerm::Damped);
  double f = cfg.freq_at(20), phi = cfg.aspect_at(50);
  double e = 2.0 * kPi * c.gamma * f * std::sin(phi);
  CHECK(std::abs(grow.data.at(20, 50)) == Approx(std::exp(e)).epsilon(1e-12));
  CHECK(std::abs(damp.data.at(20, 50)) == Approx(std::exp(-e)).epsilon(1e-12));
  // gamma = 0: both conventions coincide exactly
  c.gamma = 0.0;
  auto g0 = evaluate_spectrum({c}, cfg, AspectTerm::AsPrinted);
  auto d0 = evaluate_spectrum({c}, cfg, AspectTerm::Damped);
  for (std::size_t i = 0; i < g0.data.numel(); ++i) CHECK(g0.data.v[i] == d0.data.v[i]);
}

TEST_CASE("geometry table round-trip", "[radar]") {
  CHECK(classify_geometry(1.0, 0.0) == Geometry::Trihedral);
  CHECK(classify_geometry(0.5, 0.0) == Geometry::TopHat);
  CHECK(classify_geometry(-1.0, 0.0) == Geometry::CornerDiffraction);
  CHECK(classify_geometry(0.0, 0.0) == Geometry::Sphere);
  CHECK(classify_geometry(0.0, 1.5) == Geometry::EdgeBroadside);
  CHECK(classify_geometry(-0.5, 1.5) == Geometry::EdgeDiffraction);
  CHECK(classify_geometry(1.0, 1.5) == Geometry::Dihedral);
  CHECK(classify_geometry(0.5, 1.5) == Geometry::Cylinder);
  // combinations with no named geometry
  CHECK(classify_geometry(-0.5, 0.0) == Geometry::Unclassified);
  CHECK(classify_geometry(-1.0, 2.0) == Geometry::Unclassified);
  CHECK_THROWS_AS(classify_geometry(0.3, 0.0), Error);
  CHECK(std::string(geometry_name(Geometry::Dihedral)) == "dihedral");
}

TEST_CASE("center validation", "[radar]") {
  ScatterCenter c;
  c.alpha = 0.25;
  CHECK_THROWS_AS(normalize_center(c), Error);
  c.alpha = 0.5;
  c.length = -1.0;
  CHECK_THROWS_AS(normalize_center(c), Error);
  c.length = 0.0;
  c.phi_bar = 0.7;
  CHECK(normalize_center(c).phi_bar == 0.0);  // localized centers have no orientation

  // outside the unambiguous extent
  RadarConfig cfg = default_cfg();
  ScatterCenter far;
  far.x = cfg.extent_range();  // 2x past the half-extent
  CHECK_THROWS_AS(evaluate_spectrum({far}, cfg), Error);
}

TEST_CASE("render matches a direct inverse DFT oracle", "[radar][render]") {
  RadarConfig cfg = default_cfg();
  cfg.n_freq = 8;
  cfg.n_aspect = 8;
  const std::size_t P = 16;
  Spectrum spec;
  spec.cfg = cfg;
  spec.data = CMat(Shape{8, 8});
  Rng rng(7);
  for (auto& v : spec.data.v) v = cd{rng.uniform(-1, 1), rng.uniform(-1, 1)};

  CMat got = render_image_complex(spec, P);
  double worst = 0;
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t q = 0; q < P; ++q) {
      cd acc{0, 0};
      for (std::size_t m = 0; m < 8; ++m)
        for (std::size_t n = 0; n < 8; ++n) {
          double ang = 2.0 * kPi *
                       ((double(m) - 4) * (double(p) - P / 2.0) +
                        (double(n) - 4) * (double(q) - P / 2.0)) /
                       double(P);
          acc += spec.data.at(m, n) * cd{std::cos(ang), std::sin(ang)};
        }
      acc /= double(P * P);
      worst = std::max(worst, std::abs(got.at(p, q) - acc));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("render places DC at center and obeys the shift theorem", "[radar][render]") {
  RadarConfig cfg = default_cfg();
  // origin target -> all-ones spectrum modulo alpha=0 -> peak dead center
  ScatterCenter origin;
  auto chip0 = render_image(evaluate_spectrum({origin}, cfg), 128);
  auto [r0, c0] = argmax_pixel(chip0.pixels);
  CHECK(r0 == 64);
  CHECK(c0 == 64);
  CHECK(chip0.meters_per_pixel_range == Approx(cfg.extent_range() / 128.0));

  ScatterCenter t;
  t.x = 2.3;
  t.y = -1.7;
  auto chip = render_image(evaluate_spectrum({t}, cfg), 128);
  auto [r, c] = argmax_pixel(chip.pixels);
  double er = 64 + t.x / chip.meters_per_pixel_range;
  double ec = 64 + t.y / chip.meters_per_pixel_crossrange;
  CHECK(std::abs(double(r) - er) <= 1.0);
  CHECK(std::abs(double(c) - ec) <= 1.0);
}

TEST_CASE("render conserves energy and maps zero to zero", "[radar][render]") {
  RadarConfig cfg = default_cfg();
  Spectrum spec;
  spec.cfg = cfg;
  spec.data = CMat(Shape{cfg.n_freq, cfg.n_aspect});
  Rng rng(11);
  for (auto& v : spec.data.v) v = cd{rng.normal(), rng.normal()};
  const std::size_t P = 128;
  CMat img = render_image_complex(spec, P);
  double es = 0, ei = 0;
  for (auto& v : spec.data.v) es += std::norm(v);
  for (auto& v : img.v) ei += std::norm(v);
  CHECK(ei == Approx(es / double(P * P)).epsilon(1e-9));

  for (auto& v : spec.data.v) v = cd{0, 0};
  auto chip = render_image(spec, 64);
  for (double px : chip.pixels.v) CHECK(px == 0.0);
}

TEST_CASE("render rejects bad padding", "[radar][render]") {
  RadarConfig cfg = default_cfg();
  auto spec = evaluate_spectrum({ScatterCenter{}}, cfg);
  CHECK_THROWS_AS(render_image(spec, 100), Error);  // not a power of two
  CHECK_THROWS_AS(render_image(spec, 32), Error);   // smaller than the grid
}

TEST_CASE("class templates are valid and mutually distinct", "[radar][synth]") {
  RadarConfig cfg = default_cfg();
  std::vector<Spectrum> specs;
  for (int k = 0; k < kNumSynthClasses; ++k) {
    auto tmpl = class_template(k);
    CHECK(tmpl.size() >= 6);
    CHECK(tmpl.size() <= 12);
    specs.push_back(evaluate_spectrum(tmpl, cfg));  // also checks extents
  }
  for (int i = 0; i < kNumSynthClasses; ++i)
    for (int j = i + 1; j < kNumSynthClasses; ++j) {
      double d = 0;
      for (std::size_t t = 0; t < specs[i].data.numel(); ++t)
        d += std::abs(specs[i].data.v[t] - specs[j].data.v[t]);
      CHECK(d > 1.0);
    }
  CHECK_THROWS_AS(class_template(8), Error);
}

TEST_CASE("synth is deterministic and identity at zero jitter", "[radar][synth]") {
  SynthJitter j;
  auto [a, la] = synth_target(3, j, 99);
  auto [b, lb] = synth_target(3, j, 99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].amplitude_re == b[i].amplitude_re);
  }
  auto tmpl = class_template(3);
  REQUIRE(a.size() == tmpl.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == tmpl[i].x);
    CHECK(a[i].y == tmpl[i].y);
    CHECK(a[i].amplitude_re == tmpl[i].amplitude_re);
    CHECK(a[i].phi_bar == tmpl[i].phi_bar);
  }
  CHECK(la == 3);

  // different seeds move things once jitter is on
  j.pos = 0.2;
  auto [c, lc] = synth_target(3, j, 1);
  auto [d, ld] = synth_target(3, j, 2);
  bool same = true;
  for (std::size_t i = 0; i < c.size(); ++i) same = same && c[i].x == d[i].x;
  CHECK_FALSE(same);
}

TEST_CASE("position jitter statistics over 1000 draws", "[radar][synth]") {
  SynthJitter j;
  j.pos = 0.2;
  auto tmpl = class_template(0);
  std::vector<double> sum_dx(tmpl.size(), 0.0), sum_dy(tmpl.size(), 0.0);
  const int N = 1000;
  for (int s = 0; s < N; ++s) {
    auto [cs, lab] = synth_target(0, j, 1000 + std::uint64_t(s));
    REQUIRE(cs.size() == tmpl.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
      double dx = cs[i].x - tmpl[i].x, dy = cs[i].y - tmpl[i].y;
      REQUIRE(std::abs(dx) <= 0.2 + 1e-12);
      REQUIRE(std::abs(dy) <= 0.2 + 1e-12);
      sum_dx[i] += dx;
      sum_dy[i] += dy;
    }
  }
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    CHECK(std::abs(sum_dx[i] / N) < 0.02);
    CHECK(std::abs(sum_dy[i] / N) < 0.02);
  }
}

TEST_CASE("rotation jitter rotates rigidly and reorients long centers", "[radar][synth]") {
  SynthJitter j;
  j.rot = 0.3;
  auto tmpl = class_template(0);
  Rng rng(5);
  auto d = synth_from_template(tmpl, j, rng);
  REQUIRE(d.rotation != 0.0);
  CHECK(std::abs(d.rotation) <= 0.3);
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    double r_t = std::hypot(tmpl[i].x, tmpl[i].y);
    double r_d = std::hypot(d.centers[i].x, d.centers[i].y);
    CHECK(r_d == Approx(r_t).margin(1e-12));
    if (tmpl[i].length > 0)
      CHECK(d.centers[i].phi_bar == Approx(tmpl[i].phi_bar + d.rotation));
  }
}

TEST_CASE("clutter draws are bounded and well-formed", "[radar][synth]") {
  SynthJitter j;
  j.clutter = 5;
  auto tmpl = class_template(2);
  Rng rng(17);
  auto d = synth_from_template(tmpl, j, rng);
  REQUIRE(d.centers.size() == tmpl.size() + 5);
  for (std::size_t i = tmpl.size(); i < d.centers.size(); ++i) {
    const auto& c = d.centers[i];
    CHECK(std::abs(c.x) <= 5.5);
    CHECK(std::abs(c.y) <= 5.5);
    CHECK(is_canonical_alpha(c.alpha));
    double a = std::abs(c.amplitude());
    CHECK(a <= 0.3 * 2.01);
    CHECK(a >= 0.3 / 2.01);
  }
}

TEST_CASE("centers JSONL round-trips exactly", "[radar][io]") {
  auto tmpl = class_template(4);
  tmpl[0].amplitude_im = 0.12345678901234567;
  tmpl[0].gamma = 3.5e-12;
  std::string path = "/tmp/sk_test_centers.jsonl";
  json meta{{"residual_norm", 0.25}, {"iterations", 7}};
  write_centers_jsonl(path, tmpl, meta);
  auto rt = read_centers_jsonl(path);
  REQUIRE(rt.centers.size() == tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    CHECK(rt.centers[i].amplitude_re == tmpl[i].amplitude_re);
    CHECK(rt.centers[i].amplitude_im == tmpl[i].amplitude_im);
    CHECK(rt.centers[i].x == tmpl[i].x);
    CHECK(rt.centers[i].y == tmpl[i].y);
    CHECK(rt.centers[i].alpha == tmpl[i].alpha);
    CHECK(rt.centers[i].length == tmpl[i].length);
    CHECK(rt.centers[i].phi_bar == tmpl[i].phi_bar);
    CHECK(rt.centers[i].gamma == tmpl[i].gamma);
  }
  CHECK(rt.meta.at("residual_norm").get<double>() == 0.25);
  CHECK(rt.meta.at("iterations").get<int>() == 7);
  std::filesystem::remove(path);
}
