#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scatterkit/ascfit.hpp"
#include "scatterkit/common.hpp"
#include "scatterkit/io.hpp"
#include "scatterkit/radar.hpp"

namespace sk {

using json = nlohmann::json;

inline json center_to_json(const radar::ScatterCenter& c) {
  return json{{"A_re", c.amplitude_re}, {"A_im", c.amplitude_im}, {"x", c.x},
              {"y", c.y},               {"alpha", c.alpha},       {"L", c.length},
              {"phi_bar", c.phi_bar},   {"gamma", c.gamma}};
}

inline radar::ScatterCenter center_from_json(const json& j) {
  radar::ScatterCenter c;
  try {
    c.amplitude_re = j.at("A_re").get<double>();
    c.amplitude_im = j.at("A_im").get<double>();
    c.x = j.at("x").get<double>();
    c.y = j.at("y").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.length = j.at("L").get<double>();
    c.phi_bar = j.at("phi_bar").get<double>();
    c.gamma = j.value("gamma", 0.0);
  } catch (const json::exception& e) {
    fail_io(std::string("bad scatter-center record: ") + e.what());
  }
  return radar::normalize_center(c);
}

// One JSON object per line; an optional final "meta" object carries scalars
// about the producing run (residual norm, iteration count, ...).
inline void write_centers_jsonl(const std::string& path,
                                const std::vector<radar::ScatterCenter>& centers,
                                const json& meta = json()) {
  std::ostringstream os;
  for (const auto& c : centers) os << center_to_json(c).dump() << '\n';
  if (!meta.is_null()) {
    json m = meta;
    m["meta"] = true;
    os << m.dump() << '\n';
  }
  write_file(path, os.str());
}

struct CentersFile {
  std::vector<radar::ScatterCenter> centers;
  json meta;  // null when absent
};

inline CentersFile read_centers_jsonl(const std::string& path) {
  std::string text = read_file(path);
  CentersFile out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      fail_io(path + ":" + std::to_string(lineno) + ": malformed JSON line");
    if (j.contains("meta")) {
      out.meta = j;
      continue;
    }
    out.centers.push_back(center_from_json(j));
  }
  return out;
}

inline void write_fit_jsonl(const std::string& path, const ascfit::AscFitResult& r) {
  write_centers_jsonl(path, r.centers,
                      json{{"residual_norm", r.residual_norm},
                           {"iterations", r.iterations},
                           {"rank_warning", r.rank_warning}});
}

inline ascfit::AscFitResult read_fit_jsonl(const std::string& path) {
  CentersFile f = read_centers_jsonl(path);
  ascfit::AscFitResult r;
  r.centers = std::move(f.centers);
  if (!f.meta.is_null()) {
    r.residual_norm = f.meta.value("residual_norm", 0.0);
    r.iterations = f.meta.value("iterations", std::size_t(0));
    r.rank_warning = f.meta.value("rank_warning", false);
  }
  return r;
}

}  // namespace sk
