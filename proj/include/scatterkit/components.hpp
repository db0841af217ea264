#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "scatterkit/common.hpp"
#include "scatterkit/io.hpp"
#include "scatterkit/kmeans.hpp"
#include "scatterkit/radar.hpp"

namespace sk::components {

using radar::ChipImage;
using radar::RadarConfig;
using radar::ScatterCenter;

// Feature selector for clustering. AmpLoc is the parameter-free variant and
// applies to pixel images only.
enum class FeatureBasis { Full, XYA, XY, AmpLoc };

inline const char* basis_name(FeatureBasis b) {
  switch (b) {
    case FeatureBasis::Full: return "full";
    case FeatureBasis::XYA: return "xya";
    case FeatureBasis::XY: return "xy";
    case FeatureBasis::AmpLoc: return "amploc";
  }
  return "full";
}

inline FeatureBasis basis_from_name(const std::string& s) {
  if (s == "full") return FeatureBasis::Full;
  if (s == "xya") return FeatureBasis::XYA;
  if (s == "xy") return FeatureBasis::XY;
  if (s == "amploc") return FeatureBasis::AmpLoc;
  fail_config("unknown feature basis '" + s + "' (full|xya|xy|amploc)");
}

struct ComponentSet {
  std::size_t k = 0;
  std::vector<ChipImage> images;          // M_1..M_K, shared normalization, in [0,1]
  std::vector<CMat> complex_images;       // pre-normalization complex renders
  std::vector<std::size_t> assignments;   // input item -> component (canonical order)
  std::vector<std::size_t> member_ids;    // center index or pixel linear index per item
  std::vector<double> ordering_key;       // per-component energy, descending
};

namespace detail {

// z-score columns in place; zero-variance columns are centered only
inline void standardize(std::vector<std::vector<double>>& pts) {
  if (pts.empty()) return;
  std::size_t dim = pts[0].size(), n = pts.size();
  for (std::size_t d = 0; d < dim; ++d) {
    double mu = 0;
    for (auto& p : pts) mu += p[d];
    mu /= double(n);
    double var = 0;
    for (auto& p : pts) var += (p[d] - mu) * (p[d] - mu);
    var /= double(n);
    double sd = std::sqrt(var);
    for (auto& p : pts) {
      p[d] -= mu;
      if (sd > 1e-300) p[d] /= sd;
    }
  }
}

inline std::vector<std::vector<double>> center_features(const std::vector<ScatterCenter>& cs,
                                                        FeatureBasis basis) {
  std::vector<std::vector<double>> pts;
  pts.reserve(cs.size());
  for (const auto& c : cs) {
    double amp = std::abs(c.amplitude());
    switch (basis) {
      case FeatureBasis::Full:
        pts.push_back({c.x, c.y, c.length, c.phi_bar, c.alpha, amp});
        break;
      case FeatureBasis::XYA: pts.push_back({c.x, c.y, amp}); break;
      case FeatureBasis::XY: pts.push_back({c.x, c.y}); break;
      case FeatureBasis::AmpLoc:
        fail_config("amploc basis applies to amplitude images, not parameter sets");
    }
  }
  return pts;
}

// Split the highest-energy multi-member component to fill empty slots.
// energy[i]: per-item energy; pos[i]: 2-d location used for the 2-means split.
inline void repair_assignments(std::vector<std::size_t>& assign, std::size_t k,
                               const std::vector<double>& energy,
                               const std::vector<std::array<double, 2>>& pos,
                               std::uint64_t seed) {
  for (;;) {
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < assign.size(); ++i) members[assign[i]].push_back(i);
    std::size_t empty = k;
    for (std::size_t c = 0; c < k; ++c)
      if (members[c].empty()) {
        empty = c;
        break;
      }
    if (empty == k) return;

    std::size_t donor = k;
    double donor_e = -1;
    for (std::size_t c = 0; c < k; ++c) {
      if (members[c].size() < 2) continue;
      double e = 0;
      for (std::size_t i : members[c]) e += energy[i];
      if (e > donor_e) {
        donor_e = e;
        donor = c;
      }
    }
    if (donor == k) {
      log_info("component repair: only singletons left, component stays empty");
      return;
    }
    std::vector<std::vector<double>> pts;
    for (std::size_t i : members[donor]) pts.push_back({pos[i][0], pos[i][1]});
    auto split = kmeans(pts, 2, seed ^ 0x9e3779b97f4a7c15ull, 4, 50);
    bool moved = false;
    for (std::size_t j = 0; j < members[donor].size(); ++j)
      if (split.assign[j] == 1) {
        assign[members[donor][j]] = empty;
        moved = true;
      }
    if (!moved) {  // degenerate split (identical points): move the last member
      assign[members[donor].back()] = empty;
    }
  }
}

struct Order {
  std::vector<std::size_t> perm;  // new index -> old cluster id
  std::vector<double> key;        // energy per new index
};

// descending energy, ties by centroid x then y
inline Order canonical_order(std::size_t k, const std::vector<std::size_t>& assign,
                             const std::vector<double>& energy,
                             const std::vector<std::array<double, 2>>& pos) {
  std::vector<double> e(k, 0.0), cx(k, 0.0), cy(k, 0.0);
  std::vector<std::size_t> cnt(k, 0);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    e[assign[i]] += energy[i];
    cx[assign[i]] += pos[i][0];
    cy[assign[i]] += pos[i][1];
    cnt[assign[i]]++;
  }
  for (std::size_t c = 0; c < k; ++c)
    if (cnt[c]) {
      cx[c] /= double(cnt[c]);
      cy[c] /= double(cnt[c]);
    }
  Order o;
  o.perm.resize(k);
  std::iota(o.perm.begin(), o.perm.end(), std::size_t(0));
  std::sort(o.perm.begin(), o.perm.end(), [&](std::size_t a, std::size_t b) {
    if (e[a] != e[b]) return e[a] > e[b];
    if (cx[a] != cx[b]) return cx[a] < cx[b];
    if (cy[a] != cy[b]) return cy[a] < cy[b];
    return a < b;
  });
  o.key.resize(k);
  for (std::size_t c = 0; c < k; ++c) o.key[c] = e[o.perm[c]];
  return o;
}

}  // namespace detail

// K-means over the selected ASC parameter features. With fewer centers than
// clusters each center becomes its own component; trailing components stay
// empty until the reconstruction repair rule runs.
inline std::vector<std::size_t> cluster_centers(const std::vector<ScatterCenter>& centers,
                                                FeatureBasis basis, std::size_t k,
                                                std::uint64_t seed) {
  require(k >= 1, "cluster_centers: k must be >= 1");
  require(!centers.empty(), "cluster_centers: empty center list");
  if (centers.size() < k) {
    std::vector<std::size_t> assign(centers.size());
    std::iota(assign.begin(), assign.end(), std::size_t(0));
    return assign;
  }
  auto pts = detail::center_features(centers, basis);
  detail::standardize(pts);
  return kmeans(pts, k, seed).assign;
}

// Render each component's member centers, normalize all K images by the
// shared global maximum, order components canonically.
inline ComponentSet reconstruct_components(const std::vector<ScatterCenter>& centers,
                                           std::vector<std::size_t> assign, std::size_t k,
                                           const RadarConfig& cfg, std::size_t pad_to,
                                           std::uint64_t repair_seed = 1) {
  require(assign.size() == centers.size(), "assignment map must cover every center");
  require(k >= 1, "reconstruct_components: k must be >= 1");
  for (std::size_t a : assign) require(a < k, "assignment out of range");

  std::vector<double> energy(centers.size());
  std::vector<std::array<double, 2>> pos(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    energy[i] = std::norm(centers[i].amplitude());
    pos[i] = {centers[i].x, centers[i].y};
  }
  detail::repair_assignments(assign, k, energy, pos, repair_seed);

  auto order = detail::canonical_order(k, assign, energy, pos);
  std::vector<std::size_t> old_to_new(k);
  for (std::size_t c = 0; c < k; ++c) old_to_new[order.perm[c]] = c;

  ComponentSet set;
  set.k = k;
  set.ordering_key = order.key;
  set.assignments.resize(assign.size());
  set.member_ids.resize(assign.size());
  for (std::size_t i = 0; i < assign.size(); ++i) {
    set.assignments[i] = old_to_new[assign[i]];
    set.member_ids[i] = i;
  }

  double global_max = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<ScatterCenter> members;
    for (std::size_t i = 0; i < centers.size(); ++i)
      if (set.assignments[i] == c) members.push_back(centers[i]);
    CMat cimg;
    if (members.empty()) {
      cimg = CMat(Shape{pad_to, pad_to});
    } else {
      cimg = radar::render_image_complex(radar::evaluate_spectrum(members, cfg), pad_to);
    }
    for (const auto& v : cimg.v) global_max = std::max(global_max, std::abs(v));
    set.complex_images.push_back(std::move(cimg));
  }

  for (std::size_t c = 0; c < k; ++c) {
    ChipImage img;
    img.height = pad_to;
    img.width = pad_to;
    img.pixels = RMat(Shape{pad_to, pad_to});
    img.meters_per_pixel_range = cfg.extent_range() / double(pad_to);
    img.meters_per_pixel_crossrange = cfg.extent_crossrange() / double(pad_to);
    for (std::size_t i = 0; i < img.pixels.numel(); ++i) {
      double v = std::abs(set.complex_images[c].v[i]);
      if (global_max > 0) v /= global_max;
      img.pixels.v[i] = std::clamp(v, 0.0, 1.0);
    }
    set.images.push_back(std::move(img));
  }
  return set;
}

// Parameter-free variant: cluster the brightest 5% of pixels on
// (row, col, amplitude) features and paint each cluster into its own map.
inline ComponentSet amplitude_components(const ChipImage& chip, std::size_t k,
                                         std::uint64_t seed) {
  require(k >= 1, "amplitude_components: k must be >= 1");
  const std::size_t N = chip.pixels.numel();
  require(N > 0, "amplitude_components: empty image");

  std::vector<std::size_t> rank(N);
  std::iota(rank.begin(), rank.end(), std::size_t(0));
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (chip.pixels.v[a] != chip.pixels.v[b]) return chip.pixels.v[a] > chip.pixels.v[b];
    return a < b;  // row-major rank tie-break
  });
  std::size_t keep = std::max<std::size_t>(1, (N + 19) / 20);  // top 5%, ceil
  std::vector<std::size_t> ids(rank.begin(), rank.begin() + keep);
  std::sort(ids.begin(), ids.end());

  std::vector<std::size_t> assign;
  if (ids.size() < k) {
    assign.resize(ids.size());
    std::iota(assign.begin(), assign.end(), std::size_t(0));
  } else {
    std::vector<std::vector<double>> pts;
    pts.reserve(ids.size());
    for (std::size_t id : ids)
      pts.push_back({double(id / chip.width), double(id % chip.width), chip.pixels.v[id]});
    detail::standardize(pts);
    assign = kmeans(pts, k, seed).assign;
  }

  std::vector<double> energy(ids.size());
  std::vector<std::array<double, 2>> pos(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    energy[i] = chip.pixels.v[ids[i]] * chip.pixels.v[ids[i]];
    pos[i] = {double(ids[i] / chip.width), double(ids[i] % chip.width)};
  }
  detail::repair_assignments(assign, k, energy, pos, seed ^ 0x517cc1b727220a95ull);
  auto order = detail::canonical_order(k, assign, energy, pos);
  std::vector<std::size_t> old_to_new(k);
  for (std::size_t c = 0; c < k; ++c) old_to_new[order.perm[c]] = c;

  ComponentSet set;
  set.k = k;
  set.ordering_key = order.key;
  set.member_ids = ids;
  set.assignments.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) set.assignments[i] = old_to_new[assign[i]];

  double global_max = 0;
  for (std::size_t id : ids) global_max = std::max(global_max, chip.pixels.v[id]);
  for (std::size_t c = 0; c < k; ++c) {
    ChipImage img;
    img.height = chip.height;
    img.width = chip.width;
    img.pixels = RMat(Shape{chip.height, chip.width});
    img.meters_per_pixel_range = chip.meters_per_pixel_range;
    img.meters_per_pixel_crossrange = chip.meters_per_pixel_crossrange;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (set.assignments[i] == c) {
        double v = chip.pixels.v[ids[i]];
        img.pixels.v[ids[i]] = global_max > 0 ? std::clamp(v / global_max, 0.0, 1.0) : 0.0;
      }
    set.images.push_back(std::move(img));
  }
  return set;
}

// --- serialization: K SKB1 images + a text sidecar ------------------------

inline void save_component_set(const std::string& prefix, const ComponentSet& set) {
  for (std::size_t c = 0; c < set.k; ++c)
    write_file(prefix + "_m" + std::to_string(c) + ".skb", skb_encode(to_skb(set.images[c].pixels)));
  std::ostringstream os;
  os << "k " << set.k << "\n";
  for (std::size_t c = 0; c < set.k; ++c)
    os << "order_key " << c << " " << format_g17(set.ordering_key[c]) << "\n";
  for (std::size_t i = 0; i < set.assignments.size(); ++i)
    os << "assign " << set.member_ids[i] << " " << set.assignments[i] << "\n";
  write_file(prefix + "_components.txt", os.str());
}

}  // namespace sk::components
