#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "scatterkit/common.hpp"
#include "scatterkit/rng.hpp"

namespace sk {

struct KMeansResult {
  std::vector<std::size_t> assign;            // point -> cluster
  std::vector<std::vector<double>> centroids; // [k][dim]
  double inertia = 0.0;
};

namespace detail {

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

// k-means++ seeding: D^2-weighted draws after a uniform first pick.
inline std::vector<std::vector<double>> kmpp_init(const std::vector<std::vector<double>>& pts,
                                                  std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> cents;
  cents.reserve(k);
  cents.push_back(pts[rng.uniform_int(pts.size())]);
  std::vector<double> d2(pts.size());
  while (cents.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : cents) best = std::min(best, dist2(pts[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0) {  // all mass on existing centroids (duplicate points)
      cents.push_back(pts[rng.uniform_int(pts.size())]);
      continue;
    }
    double u = rng.uniform01() * total, acc = 0;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      acc += d2[i];
      if (u <= acc) {
        pick = i;
        break;
      }
    }
    cents.push_back(pts[pick]);
  }
  return cents;
}

inline KMeansResult lloyd(const std::vector<std::vector<double>>& pts,
                          std::vector<std::vector<double>> cents, std::size_t max_iter) {
  const std::size_t n = pts.size(), k = cents.size(), dim = pts[0].size();
  KMeansResult res;
  res.assign.assign(n, 0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = dist2(pts[i], cents[0]);
      for (std::size_t c = 1; c < k; ++c) {
        double d = dist2(pts[i], cents[c]);
        if (d < bd) {  // ties keep the lowest cluster index
          bd = d;
          best = c;
        }
      }
      if (best != res.assign[i]) changed = true;
      res.assign[i] = best;
    }
    // empty clusters grab the point farthest from its current centroid
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) count[res.assign[i]]++;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) continue;
      std::size_t far_i = 0;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        if (count[res.assign[i]] <= 1) continue;  // never empty a singleton donor
        double d = dist2(pts[i], cents[res.assign[i]]);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      if (far_d < 0) continue;
      count[res.assign[far_i]]--;
      res.assign[far_i] = c;
      count[c] = 1;
      changed = true;
    }
    if (!changed && it > 0) break;
    for (auto& c : cents) c.assign(dim, 0.0);
    std::vector<std::size_t> m(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      m[res.assign[i]]++;
      for (std::size_t d = 0; d < dim; ++d) cents[res.assign[i]][d] += pts[i][d];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (m[c] > 0)
        for (std::size_t d = 0; d < dim; ++d) cents[c][d] /= double(m[c]);
  }
  res.centroids = std::move(cents);
  res.inertia = 0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += dist2(pts[i], res.centroids[res.assign[i]]);
  return res;
}

}  // namespace detail

// Deterministic K-means: k-means++ seeding, Lloyd iterations, several
// restarts; the winner is the (inertia, restart-index) minimum so results are
// reproducible for a given seed no matter how restarts are scheduled. Points
// are canonicalized by lexicographic sort before any random draw, which makes
// the partition a pure function of the point set rather than its order.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& pts, std::size_t k,
                           std::uint64_t seed, std::size_t restarts = 10,
                           std::size_t max_iter = 100) {
  require(k >= 1, "kmeans: k must be >= 1");
  require(pts.size() >= k, "kmeans: fewer points than clusters");
  for (const auto& p : pts) require(p.size() == pts[0].size(), "kmeans: ragged points");

  std::vector<std::size_t> perm(pts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::sort(perm.begin(), perm.end(),
            [&](std::size_t a, std::size_t b) { return pts[a] < pts[b]; });
  std::vector<std::vector<double>> sorted(pts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) sorted[i] = pts[perm[i]];

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng = Rng::child(seed, r);
    auto res = detail::lloyd(sorted, detail::kmpp_init(sorted, k, rng), max_iter);
    if (res.inertia < best.inertia) best = std::move(res);  // ties keep earliest restart
  }
  KMeansResult out;
  out.centroids = best.centroids;
  out.inertia = best.inertia;
  out.assign.resize(pts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.assign[perm[i]] = best.assign[i];
  return out;
}

}  // namespace sk
