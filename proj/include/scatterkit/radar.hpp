#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "scatterkit/common.hpp"
#include "scatterkit/rng.hpp"
#include "scatterkit/tensor.hpp"

namespace sk::radar {

using cd = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kC = 2.9979e8;  // propagation velocity, m/s

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// One attributed scattering center. Amplitude is complex; alpha takes one of
// the five canonical half-integer values; length 0 means a localized center
// (phi_bar is forced to 0 then).
struct ScatterCenter {
  double amplitude_re = 1.0;
  double amplitude_im = 0.0;
  double x = 0.0;        // m, range direction
  double y = 0.0;        // m, cross-range direction
  double alpha = 0.0;    // frequency dependence, in {-1,-0.5,0,0.5,1}
  double length = 0.0;   // m, >= 0
  double phi_bar = 0.0;  // rad, orientation (distributed centers only)
  double gamma = 0.0;    // 1/Hz, aspect dependency

  cd amplitude() const { return {amplitude_re, amplitude_im}; }
};

inline bool is_canonical_alpha(double a) {
  for (double v : {-1.0, -0.5, 0.0, 0.5, 1.0})
    if (std::abs(a - v) < 1e-12) return true;
  return false;
}

inline ScatterCenter normalize_center(ScatterCenter c) {
  if (!is_canonical_alpha(c.alpha)) fail_invariant("alpha must be one of {-1,-0.5,0,0.5,1}");
  if (!(c.length >= 0.0)) fail_invariant("length must be >= 0");
  if (c.length == 0.0) c.phi_bar = 0.0;
  return c;
}

struct RadarConfig {
  double center_freq = 9.6e9;   // Hz
  double bandwidth = 0.59e9;    // Hz
  double aspect_center = 0.0;   // rad
  double aspect_span = 3.0 * kPi / 180.0;  // rad
  std::size_t n_freq = 64;
  std::size_t n_aspect = 64;
  double c = kC;

  void validate() const {
    require(n_freq >= 2 && n_aspect >= 2, "radar grid needs n_freq, n_aspect >= 2");
    require(bandwidth > 0.0 && aspect_span > 0.0, "bandwidth and aspect_span must be > 0");
    require(c > 0.0 && center_freq > bandwidth / 2.0, "invalid center frequency");
  }

  double freq_step() const { return bandwidth / double(n_freq); }
  double aspect_step() const { return aspect_span / double(n_aspect); }
  double freq_at(std::size_t m) const {
    return center_freq + (double(m) - double(n_freq) / 2.0) * freq_step();
  }
  double aspect_at(std::size_t n) const {
    return aspect_center + (double(n) - double(n_aspect) / 2.0) * aspect_step();
  }

  // Unambiguous scene extents implied by the sampling.
  double extent_range() const { return c * double(n_freq) / (2.0 * bandwidth); }
  double extent_crossrange() const {
    return c * double(n_aspect) / (2.0 * center_freq * aspect_span);
  }
};

// Frequency-aspect samples; rows index frequency, columns index aspect.
struct Spectrum {
  RadarConfig cfg;
  CMat data;  // [n_freq, n_aspect]
};

struct ChipImage {
  std::size_t height = 0;
  std::size_t width = 0;
  RMat pixels;  // magnitude, >= 0
  double meters_per_pixel_range = 0.0;
  double meters_per_pixel_crossrange = 0.0;
};

// ---------------------------------------------------------------------------
// Scattering geometry (alpha, L) typing
// ---------------------------------------------------------------------------

enum class Geometry {
  Trihedral,
  TopHat,
  CornerDiffraction,
  Sphere,
  EdgeBroadside,
  EdgeDiffraction,
  Dihedral,
  Cylinder,
  Unclassified,
};

inline const char* geometry_name(Geometry g) {
  switch (g) {
    case Geometry::Trihedral: return "trihedral";
    case Geometry::TopHat: return "top_hat";
    case Geometry::CornerDiffraction: return "corner_diffraction";
    case Geometry::Sphere: return "sphere";
    case Geometry::EdgeBroadside: return "edge_broadside";
    case Geometry::EdgeDiffraction: return "edge_diffraction";
    case Geometry::Dihedral: return "dihedral";
    case Geometry::Cylinder: return "cylinder";
    case Geometry::Unclassified: return "unclassified";
  }
  return "unclassified";
}

inline Geometry classify_geometry(double alpha, double length) {
  if (!is_canonical_alpha(alpha)) fail_invariant("classify_geometry: non-canonical alpha");
  if (!(length >= 0.0)) fail_invariant("classify_geometry: negative length");
  bool dist = length > 0.0;
  auto near = [&](double v) { return std::abs(alpha - v) < 1e-12; };
  if (!dist) {
    if (near(1.0)) return Geometry::Trihedral;
    if (near(0.5)) return Geometry::TopHat;
    if (near(-1.0)) return Geometry::CornerDiffraction;
    if (near(0.0)) return Geometry::Sphere;
    return Geometry::Unclassified;  // (-0.5, L=0) has no table row
  }
  if (near(0.0)) return Geometry::EdgeBroadside;
  if (near(-0.5)) return Geometry::EdgeDiffraction;
  if (near(1.0)) return Geometry::Dihedral;
  if (near(0.5)) return Geometry::Cylinder;
  return Geometry::Unclassified;  // (-1, L>0) has no table row
}

// ---------------------------------------------------------------------------
// Forward model
// ---------------------------------------------------------------------------

// The aspect dependency term appears in the model as a real exponential
// exp(2*pi*gamma*f*sin(phi)); `Damped` flips its sign for the decaying
// convention. Identical for gamma = 0, which is the default everywhere.
enum class AspectTerm { AsPrinted, Damped };

inline double sinc(double t) {
  if (std::abs(t) < 1e-8) return 1.0 - t * t / 6.0;
  return std::sin(t) / t;
}

// j^alpha on the principal branch.
inline cd j_pow(double alpha) {
  return {std::cos(alpha * kPi / 2.0), std::sin(alpha * kPi / 2.0)};
}

inline cd eval_center(const ScatterCenter& sc, double f, double phi, double fc, double c,
                      AspectTerm mode) {
  cd val = sc.amplitude() * j_pow(sc.alpha) * std::pow(f / fc, sc.alpha);
  if (sc.gamma != 0.0) {
    double e = 2.0 * kPi * sc.gamma * f * std::sin(phi);
    val *= std::exp(mode == AspectTerm::AsPrinted ? e : -e);
  }
  double ph = -4.0 * kPi * f / c * (sc.x * std::cos(phi) + sc.y * std::sin(phi));
  val *= cd{std::cos(ph), std::sin(ph)};
  if (sc.length > 0.0)
    val *= sinc(2.0 * kPi * sc.length / c * f * std::sin(phi - sc.phi_bar));
  return val;
}

inline void check_scene_extent(const ScatterCenter& sc, const RadarConfig& cfg) {
  double hx = cfg.extent_range() / 2.0, hy = cfg.extent_crossrange() / 2.0;
  if (std::abs(sc.x) > hx || std::abs(sc.y) > hy)
    fail_invariant("scatter center outside unambiguous scene extent");
}

inline Spectrum evaluate_spectrum(const std::vector<ScatterCenter>& centers, const RadarConfig& cfg,
                                  AspectTerm mode = AspectTerm::AsPrinted) {
  cfg.validate();
  std::vector<ScatterCenter> cs;
  cs.reserve(centers.size());
  for (const auto& c : centers) {
    ScatterCenter n = normalize_center(c);
    check_scene_extent(n, cfg);
    cs.push_back(n);
  }
  Spectrum s;
  s.cfg = cfg;
  s.data = CMat(Shape{cfg.n_freq, cfg.n_aspect});
  for (std::size_t m = 0; m < cfg.n_freq; ++m) {
    double f = cfg.freq_at(m);
    for (std::size_t n = 0; n < cfg.n_aspect; ++n) {
      double phi = cfg.aspect_at(n);
      cd acc{0.0, 0.0};
      for (const auto& sc : cs) acc += eval_center(sc, f, phi, cfg.center_freq, cfg.c, mode);
      s.data.at(m, n) = acc;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Image formation (rectangular small-aperture approximation)
// ---------------------------------------------------------------------------

inline bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Centered zero-pad to pad*pad, 2-d inverse DFT with 1/pad scaling per axis,
// then fft-shift. Energy satisfies sum|img|^2 = sum|spec|^2 / pad^2.
inline CMat render_image_complex(const Spectrum& spec, std::size_t pad_to) {
  const std::size_t nf = spec.cfg.n_freq, na = spec.cfg.n_aspect;
  require(spec.data.shape == Shape({nf, na}), "spectrum dims do not match grid");
  if (!is_pow2(pad_to)) fail_invariant("pad_to must be a power of two");
  if (pad_to < std::max(nf, na)) fail_invariant("pad_to smaller than spectrum grid");
  const std::size_t P = pad_to;

  CMat padded(Shape{P, P});
  for (std::size_t m = 0; m < nf; ++m) {
    std::size_t mi = (m + P - nf / 2) % P;  // baseband index m - nf/2, wrapped
    for (std::size_t n = 0; n < na; ++n) {
      std::size_t ni = (n + P - na / 2) % P;
      padded.at(mi, ni) = spec.data.at(m, n);
    }
  }

  Eigen::FFT<double> fft;
  std::vector<cd> line(P), out(P);
  // inverse along rows
  for (std::size_t r = 0; r < P; ++r) {
    for (std::size_t c = 0; c < P; ++c) line[c] = padded.at(r, c);
    fft.inv(out, line);
    for (std::size_t c = 0; c < P; ++c) padded.at(r, c) = out[c];
  }
  // inverse along columns
  for (std::size_t c = 0; c < P; ++c) {
    for (std::size_t r = 0; r < P; ++r) line[r] = padded.at(r, c);
    fft.inv(out, line);
    for (std::size_t r = 0; r < P; ++r) padded.at(r, c) = out[r];
  }

  CMat img(Shape{P, P});
  for (std::size_t r = 0; r < P; ++r)
    for (std::size_t c = 0; c < P; ++c)
      img.at(r, c) = padded.at((r + P / 2) % P, (c + P / 2) % P);
  return img;
}

inline ChipImage render_image(const Spectrum& spec, std::size_t pad_to) {
  CMat img = render_image_complex(spec, pad_to);
  ChipImage chip;
  chip.height = pad_to;
  chip.width = pad_to;
  chip.pixels = RMat(Shape{pad_to, pad_to});
  for (std::size_t i = 0; i < img.numel(); ++i) chip.pixels.v[i] = std::abs(img.v[i]);
  chip.meters_per_pixel_range = spec.cfg.extent_range() / double(pad_to);
  chip.meters_per_pixel_crossrange = spec.cfg.extent_crossrange() / double(pad_to);
  return chip;
}

// ---------------------------------------------------------------------------
// Synthetic labeled targets
// ---------------------------------------------------------------------------

struct SynthJitter {
  double pos = 0.0;         // m, uniform +/- per coordinate
  double amp = 0.0;         // log-uniform factor in [1/max(amp,1), max(amp,1)]
  double rot = 0.0;         // rad, uniform +/- template rotation
  int clutter = 0;          // extra weak centers
  double clutter_amp = 0.3; // clutter amplitude scale

  void validate() const {
    require(std::isfinite(pos) && std::isfinite(amp) && std::isfinite(rot) &&
                std::isfinite(clutter_amp) && pos >= 0 && amp >= 0 && clutter >= 0,
            "synth jitter fields must be finite and non-negative");
  }
};

constexpr int kNumSynthClasses = 8;

namespace detail {

inline ScatterCenter mk(double a, double x, double y, double alpha, double L, double phi_deg) {
  ScatterCenter c;
  c.amplitude_re = a;
  c.x = x;
  c.y = y;
  c.alpha = alpha;
  c.length = L;
  c.phi_bar = phi_deg * kPi / 180.0;
  return normalize_center(c);
}

}  // namespace detail

// Fixed per-class center layouts, loosely shaped like vehicle components
// (hull corners, turret, gun, wheels). Positions stay within ~6 m so the
// default grid never aliases, jitter included.
inline std::vector<ScatterCenter> class_template(int class_id) {
  using detail::mk;
  switch (class_id) {
    case 0:  // boxy tank: hull corners + dihedral flank + turret + gun
      return {mk(1.0, -2.0, -1.2, 1.0, 0.0, 0), mk(1.0, -2.0, 1.2, 1.0, 0.0, 0),
              mk(1.0, 2.0, -1.2, 1.0, 0.0, 0),  mk(1.0, 2.0, 1.2, 1.0, 0.0, 0),
              mk(1.6, 0.0, -1.2, 1.0, 3.0, 0),  mk(2.2, 0.2, 0.0, 0.5, 0.0, 0),
              mk(0.8, 1.2, 0.6, 0.5, 1.8, 8),   mk(0.6, -1.0, 0.3, 0.0, 0.0, 0)};
    case 1:  // long truck: sparse corners + broadside edge + bright cab
      return {mk(0.9, -2.8, -0.9, 1.0, 0.0, 0), mk(0.9, -2.8, 0.9, 1.0, 0.0, 0),
              mk(0.9, 2.8, -0.9, 1.0, 0.0, 0),  mk(0.9, 2.8, 0.9, 1.0, 0.0, 0),
              mk(1.2, 0.0, 0.9, 0.0, 3.6, 0),   mk(2.4, -2.1, 0.0, 0.5, 0.0, 0),
              mk(1.8, -1.4, 0.0, 0.5, 0.0, 0)};
    case 2:  // twin dihedral bars
      return {mk(1.8, 0.0, -1.5, 1.0, 2.5, 0),  mk(1.8, 0.0, 1.5, 1.0, 2.5, 0),
              mk(0.5, -2.2, 0.0, 0.0, 0.0, 0),  mk(0.5, 2.2, 0.0, 0.0, 0.0, 0),
              mk(0.5, 0.0, 0.0, 0.0, 0.0, 0),   mk(0.7, 1.1, -0.6, 0.5, 0.0, 0)};
    case 3:  // cross layout, mixed responses
      return {mk(1.5, 0.0, 0.0, 1.0, 0.0, 0),   mk(1.0, 2.4, 0.0, 0.5, 0.0, 0),
              mk(1.0, -2.4, 0.0, 0.5, 0.0, 0),  mk(1.0, 0.0, 2.4, 0.0, 0.0, 0),
              mk(1.0, 0.0, -2.4, 0.0, 0.0, 0),  mk(0.7, 1.2, 1.2, -0.5, 1.5, -10),
              mk(0.7, -1.2, -1.2, -0.5, 1.5, 10)};
    case 4:  // self-propelled gun: long barrel + offset trihedral cluster
      return {mk(1.1, 0.6, 0.0, 0.5, 4.0, 0),   mk(1.4, -2.4, -0.8, 1.0, 0.0, 0),
              mk(1.4, -2.4, 0.8, 1.0, 0.0, 0),  mk(1.0, -3.2, 0.0, 1.0, 0.0, 0),
              mk(0.8, -1.4, 0.0, 0.5, 0.0, 0),  mk(0.5, 1.8, 1.4, 0.0, 0.0, 0),
              mk(0.5, 1.8, -1.4, 0.0, 0.0, 0),  mk(0.4, 3.4, 0.6, 0.0, 0.0, 0)};
    case 5:  // compact scout: tight cluster + corner diffraction tail
      return {mk(1.6, 0.0, 0.0, 0.5, 0.0, 0),   mk(1.0, 0.9, 0.7, 1.0, 0.0, 0),
              mk(1.0, -0.9, 0.7, 1.0, 0.0, 0),  mk(1.0, 0.0, -1.1, 1.0, 0.0, 0),
              mk(0.8, 1.4, -0.5, 0.0, 0.0, 0),  mk(0.9, -2.6, -1.8, -1.0, 0.0, 0)};
    case 6:  // radar van: square body + mast + diffraction edge
      return {mk(1.0, -1.5, -1.5, 1.0, 0.0, 0), mk(1.0, -1.5, 1.5, 1.0, 0.0, 0),
              mk(1.0, 1.5, -1.5, 1.0, 0.0, 0),  mk(1.0, 1.5, 1.5, 1.0, 0.0, 0),
              mk(2.6, 0.0, 0.0, 0.5, 0.0, 0),   mk(0.7, 0.0, 2.6, -0.5, 2.0, 0),
              mk(0.7, 0.0, -2.6, -0.5, 2.0, 0), mk(0.5, 2.6, 0.0, 0.0, 0.0, 0),
              mk(0.5, -2.6, 0.0, 0.0, 0.0, 0)};
    case 7:  // emplacement: ring of spheres + strong central trihedral
      return {mk(2.0, 0.0, 0.0, 1.0, 0.0, 0),   mk(0.8, 2.5, 0.0, 0.0, 0.0, 0),
              mk(0.8, 1.25, 2.17, 0.0, 0.0, 0), mk(0.8, -1.25, 2.17, 0.0, 0.0, 0),
              mk(0.8, -2.5, 0.0, 0.0, 0.0, 0),  mk(0.8, -1.25, -2.17, 0.0, 0.0, 0),
              mk(0.8, 1.25, -2.17, 0.0, 0.0, 0), mk(1.2, 0.8, 0.8, 0.5, 1.2, -6)};
    default:
      fail_invariant("unknown class_id " + std::to_string(class_id));
  }
}

struct SynthDraw {
  std::vector<ScatterCenter> centers;
  double rotation = 0.0;  // rad, the applied template rotation
};

// Perturb a template: per-center position/amplitude jitter, then a common
// rotation, then optional clutter. Draw order is fixed so outputs are a pure
// function of (template, jitter, rng state).
inline SynthDraw synth_from_template(const std::vector<ScatterCenter>& tmpl,
                                     const SynthJitter& jitter, Rng& rng) {
  jitter.validate();
  SynthDraw d;
  d.rotation = jitter.rot > 0 ? rng.uniform(-jitter.rot, jitter.rot) : 0.0;
  double cr = std::cos(d.rotation), sr = std::sin(d.rotation);
  double amp_base = std::max(jitter.amp, 1.0);
  double la = std::log(amp_base);
  d.centers.reserve(tmpl.size() + std::size_t(jitter.clutter));
  for (const auto& t : tmpl) {
    ScatterCenter c = t;
    if (jitter.pos > 0) {
      c.x += rng.uniform(-jitter.pos, jitter.pos);
      c.y += rng.uniform(-jitter.pos, jitter.pos);
    }
    if (la > 0) {
      double f = std::exp(rng.uniform(-la, la));
      c.amplitude_re *= f;
      c.amplitude_im *= f;
    }
    double x = c.x * cr - c.y * sr;
    double y = c.x * sr + c.y * cr;
    c.x = x;
    c.y = y;
    if (c.length > 0.0) c.phi_bar += d.rotation;
    d.centers.push_back(normalize_center(c));
  }
  for (int i = 0; i < jitter.clutter; ++i) {
    ScatterCenter c;
    c.x = rng.uniform(-5.5, 5.5);
    c.y = rng.uniform(-5.5, 5.5);
    double a = jitter.clutter_amp * std::exp(rng.uniform(-0.693, 0.693));
    double ph = rng.uniform(0.0, 2.0 * kPi);
    c.amplitude_re = a * std::cos(ph);
    c.amplitude_im = a * std::sin(ph);
    static const double alphas[5] = {-1.0, -0.5, 0.0, 0.5, 1.0};
    c.alpha = alphas[rng.uniform_int(5)];
    d.centers.push_back(normalize_center(c));
  }
  return d;
}

inline std::pair<std::vector<ScatterCenter>, int> synth_target(int class_id,
                                                               const SynthJitter& jitter,
                                                               std::uint64_t rng_seed) {
  auto tmpl = class_template(class_id);
  Rng rng(rng_seed);
  return {synth_from_template(tmpl, jitter, rng).centers, class_id};
}

}  // namespace sk::radar
