#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "scatterkit/common.hpp"
#include "scatterkit/radar.hpp"
#include "scatterkit/threads.hpp"

namespace sk::ascfit {

using cd = std::complex<double>;
using radar::RadarConfig;
using radar::ScatterCenter;
using radar::Spectrum;

struct DictionaryConfig {
  std::vector<double> alpha_values = {-1.0, -0.5, 0.0, 0.5, 1.0};
  std::vector<double> length_values = {0.0, 1.0, 2.0, 4.0};  // m
  std::vector<double> phi_bar_values = {-10.0 * radar::kPi / 180.0, 0.0,
                                        10.0 * radar::kPi / 180.0};  // rad, L > 0 only
  double x_step = 0.0;  // m, required > 0
  double y_step = 0.0;
  std::size_t max_atoms = 2'000'000;

  // Pixel-aligned grid: one candidate position per image pixel.
  static DictionaryConfig pixel_aligned(const RadarConfig& cfg, std::size_t pad_to) {
    DictionaryConfig d;
    d.x_step = cfg.extent_range() / double(pad_to);
    d.y_step = cfg.extent_crossrange() / double(pad_to);
    return d;
  }

  void validate() const {
    require(x_step > 0 && y_step > 0, "dictionary steps must be > 0");
    require(!alpha_values.empty() && !length_values.empty(), "empty dictionary axis");
    for (double a : alpha_values)
      require(radar::is_canonical_alpha(a), "dictionary alpha not canonical");
    for (double l : length_values) require(l >= 0, "dictionary length < 0");
    bool any_long = false;
    for (double l : length_values) any_long = any_long || l > 0;
    require(!any_long || !phi_bar_values.empty(),
            "phi_bar_values required when length_values has L > 0");
  }
};

struct AtomParams {
  double x = 0, y = 0, alpha = 0, length = 0, phi_bar = 0;
};

// Discretized search space. Columns are never materialized wholesale: an atom
// factors into a position-independent part g (alpha/length/phi_bar response)
// and unit-modulus position phasors, so the full table would be pure
// redundancy. column(i) evaluates exactly on demand.
class AtomTable {
 public:
  AtomTable(const RadarConfig& cfg, const DictionaryConfig& dict) : cfg_(cfg), dict_(dict) {
    cfg.validate();
    dict.validate();
    xs_ = lattice(cfg.extent_range(), dict.x_step);
    ys_ = lattice(cfg.extent_crossrange(), dict.y_step);

    for (double a : dict.alpha_values)
      for (double l : dict.length_values) {
        if (l > 0) {
          for (double pb : dict.phi_bar_values) combos_.push_back({a, l, pb, {}, 0});
        } else {
          combos_.push_back({a, 0.0, 0.0, {}, 0});
        }
      }

    std::size_t count = combos_.size() * xs_.size() * ys_.size();
    if (count > dict.max_atoms)
      fail_config("dictionary would hold " + std::to_string(count) + " atoms (cap " +
                  std::to_string(dict.max_atoms) + ")");

    const std::size_t S = samples();
    for (auto& cb : combos_) {
      ScatterCenter c;
      c.alpha = cb.alpha;
      c.length = cb.length;
      c.phi_bar = cb.phi_bar;
      auto spec = radar::evaluate_spectrum({c}, cfg_);
      cb.g = std::move(spec.data.v);
      double n2 = 0;
      for (const cd& v : cb.g) n2 += std::norm(v);
      cb.norm = std::sqrt(n2);  // position phasors are unit modulus
      require(cb.norm > 0, "degenerate dictionary combo");
    }

    px_.resize(xs_.size());
    py_.resize(ys_.size());
    for (std::size_t i = 0; i < xs_.size(); ++i) px_[i] = phase_field(xs_[i], true);
    for (std::size_t i = 0; i < ys_.size(); ++i) py_[i] = phase_field(ys_[i], false);
    (void)S;
  }

  const RadarConfig& cfg() const { return cfg_; }
  std::size_t samples() const { return cfg_.n_freq * cfg_.n_aspect; }
  std::size_t size() const { return combos_.size() * xs_.size() * ys_.size(); }
  std::size_t n_combos() const { return combos_.size(); }
  std::size_t nx() const { return xs_.size(); }
  std::size_t ny() const { return ys_.size(); }

  AtomParams params(std::size_t i) const {
    check_index(i);
    std::size_t ix = i % xs_.size();
    std::size_t iy = (i / xs_.size()) % ys_.size();
    std::size_t c = i / (xs_.size() * ys_.size());
    const Combo& cb = combos_[c];
    return {xs_[ix], ys_[iy], cb.alpha, cb.length, cb.phi_bar};
  }

  ScatterCenter unit_center(std::size_t i) const {
    AtomParams p = params(i);
    ScatterCenter c;
    c.x = p.x;
    c.y = p.y;
    c.alpha = p.alpha;
    c.length = p.length;
    c.phi_bar = p.phi_bar;
    return radar::normalize_center(c);
  }

  // Exact unit-amplitude column and its L2 norm (the de-normalization factor).
  std::vector<cd> raw_column(std::size_t i) const {
    auto spec = radar::evaluate_spectrum({unit_center(i)}, cfg_);
    return std::move(spec.data.v);
  }
  double column_norm(std::size_t i) const {
    auto col = raw_column(i);
    double n2 = 0;
    for (const cd& v : col) n2 += std::norm(v);
    return std::sqrt(n2);
  }
  std::vector<cd> column(std::size_t i) const {
    auto col = raw_column(i);
    double n2 = 0;
    for (const cd& v : col) n2 += std::norm(v);
    double n = std::sqrt(n2);
    require(n > 0, "zero-norm atom column");
    for (cd& v : col) v /= n;
    return col;
  }

  // Argmax_i |<column_i, r>| over the whole table, ties to the lowest index.
  // Factored scan: <g.px.py, r> = <px, conj(py) . (conj(g) . r)>; chunking is
  // (combo, iy)-major and merged in order, so the winner is independent of
  // thread count.
  std::pair<std::size_t, double> best_match(const std::vector<cd>& resid, int n_threads) const {
    require(resid.size() == samples(), "residual length mismatch");
    const std::size_t S = samples(), NX = xs_.size(), NY = ys_.size();
    const std::size_t jobs = combos_.size() * NY;
    struct Best {
      double score = -1.0;
      std::size_t idx = 0;
    };
    std::vector<Best> per_chunk;
    const std::size_t chunk = 4;
    per_chunk.resize((jobs + chunk - 1) / chunk);

    sk::parallel_chunks(jobs, chunk, n_threads, [&](std::size_t ci, std::size_t b, std::size_t e) {
      Best local;
      std::vector<cd> w(S), u(S);
      for (std::size_t j = b; j < e; ++j) {
        std::size_t c = j / NY, iy = j % NY;
        const Combo& cb = combos_[c];
        for (std::size_t s = 0; s < S; ++s) w[s] = std::conj(cb.g[s]) * resid[s];
        const auto& py = py_[iy];
        for (std::size_t s = 0; s < S; ++s) u[s] = std::conj(py[s]) * w[s];
        for (std::size_t ix = 0; ix < NX; ++ix) {
          const auto& px = px_[ix];
          cd acc{0, 0};
          for (std::size_t s = 0; s < S; ++s) acc += std::conj(px[s]) * u[s];
          double score = std::abs(acc) / cb.norm;
          std::size_t idx = (c * NY + iy) * NX + ix;
          if (score > local.score || (score == local.score && idx < local.idx)) {
            local.score = score;
            local.idx = idx;
          }
        }
      }
      per_chunk[ci] = local;
    });

    Best best;
    for (const Best& b : per_chunk)
      if (b.score > best.score || (b.score == best.score && b.idx < best.idx)) best = b;
    return {best.idx, best.score};
  }

 private:
  struct Combo {
    double alpha, length, phi_bar;
    std::vector<cd> g;
    double norm;
  };

  static std::vector<double> lattice(double extent, double step) {
    std::size_t n = std::size_t(std::floor(extent / step + 1e-9));
    require(n >= 1, "dictionary step larger than scene extent");
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = -extent / 2.0 + double(i) * step;
    return v;
  }

  std::vector<cd> phase_field(double pos, bool range_axis) const {
    std::vector<cd> f(samples());
    for (std::size_t m = 0; m < cfg_.n_freq; ++m) {
      double fm = cfg_.freq_at(m);
      for (std::size_t n = 0; n < cfg_.n_aspect; ++n) {
        double phi = cfg_.aspect_at(n);
        double trig = range_axis ? std::cos(phi) : std::sin(phi);
        double ang = -4.0 * radar::kPi * fm / cfg_.c * pos * trig;
        f[m * cfg_.n_aspect + n] = cd{std::cos(ang), std::sin(ang)};
      }
    }
    return f;
  }

  void check_index(std::size_t i) const {
    if (i >= size()) fail_invariant("atom index out of range");
  }

  RadarConfig cfg_;
  DictionaryConfig dict_;
  std::vector<double> xs_, ys_;
  std::vector<Combo> combos_;
  std::vector<std::vector<cd>> px_, py_;
};

struct AscFitResult {
  std::vector<ScatterCenter> centers;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
  bool rank_warning = false;
  std::vector<double> residual_history;  // norm after each accepted iteration
};

// Classic orthogonal matching pursuit: greedy atom selection by correlation
// magnitude, joint least-squares re-solve over everything selected so far.
inline AscFitResult omp_fit(const Spectrum& spec, const AtomTable& atoms, std::size_t q_max,
                            double resid_tol, int n_threads = 0) {
  require(q_max >= 1, "q_max must be >= 1");
  require(resid_tol >= 0.0 && resid_tol < 1.0, "resid_tol must be in [0, 1)");
  require(spec.data.numel() == atoms.samples(), "spectrum does not match dictionary grid");
  if (n_threads <= 0) n_threads = sk::default_threads();

  const std::size_t S = atoms.samples();
  Eigen::VectorXcd b(S);
  for (std::size_t s = 0; s < S; ++s) b[s] = spec.data.v[s];
  const double b_norm = b.norm();

  AscFitResult out;
  if (b_norm == 0.0) return out;  // zero spectrum: nothing to explain

  std::vector<std::size_t> picked;
  std::vector<double> norms;  // raw-column norms for de-normalization
  Eigen::MatrixXcd Phi(S, 0);
  Eigen::VectorXcd coeff;
  std::vector<cd> resid(spec.data.v);
  double resid_norm = b_norm;

  while (picked.size() < q_max) {
    auto [idx, score] = atoms.best_match(resid, n_threads);
    if (std::find(picked.begin(), picked.end(), idx) != picked.end()) break;  // stalled

    auto raw = atoms.raw_column(idx);
    double rn2 = 0;
    for (const cd& v : raw) rn2 += std::norm(v);
    double rnorm = std::sqrt(rn2);

    Eigen::MatrixXcd Phi_try(S, Phi.cols() + 1);
    if (Phi.cols() > 0) Phi_try.leftCols(Phi.cols()) = Phi;
    for (std::size_t s = 0; s < S; ++s) Phi_try(Eigen::Index(s), Phi.cols()) = raw[s] / rnorm;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(Phi_try);
    if (qr.rank() < Phi_try.cols()) {
      out.rank_warning = true;
      log_info("omp_fit: rank-deficient system, dropping newest atom and stopping");
      break;
    }
    Eigen::VectorXcd a = qr.solve(b);

    Phi.swap(Phi_try);
    coeff = a;
    picked.push_back(idx);
    norms.push_back(rnorm);

    Eigen::VectorXcd r = b - Phi * coeff;
    resid_norm = r.norm();
    for (std::size_t s = 0; s < S; ++s) resid[s] = r[s];
    out.residual_history.push_back(resid_norm);

    if (resid_norm / b_norm <= resid_tol) break;
  }

  out.iterations = picked.size();
  out.residual_norm = resid_norm;
  out.centers.reserve(picked.size());
  for (std::size_t t = 0; t < picked.size(); ++t) {
    ScatterCenter c = atoms.unit_center(picked[t]);
    cd A = coeff[Eigen::Index(t)] / norms[t];
    c.amplitude_re = A.real();
    c.amplitude_im = A.imag();
    out.centers.push_back(c);
  }
  return out;
}

}  // namespace sk::ascfit
