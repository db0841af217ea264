#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "scatterkit/common.hpp"

namespace sk {

// Flat key=value config. '#' starts a comment, whitespace around tokens is
// trimmed, later duplicates win. CLI flags override file values.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail_config("unreadable config: " + path);
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      std::string s = strip_comment(line);
      if (trim(s).empty()) continue;
      auto eq = s.find('=');
      if (eq == std::string::npos)
        fail_config(path + ":" + std::to_string(lineno) + ": expected key=value");
      std::string k = trim(s.substr(0, eq));
      std::string v = trim(s.substr(eq + 1));
      if (k.empty()) fail_config(path + ":" + std::to_string(lineno) + ": empty key");
      c.kv_[k] = v;
    }
    return c;
  }

  void set(const std::string& k, const std::string& v) { kv_[k] = v; }
  bool has(const std::string& k) const { return kv_.count(k) != 0; }

  std::string get_str(const std::string& k, const std::string& dflt) const {
    auto it = kv_.find(k);
    return it == kv_.end() ? dflt : it->second;
  }

  double get_double(const std::string& k, double dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t pos = 0;
      double x = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      fail_config("config key '" + k + "': not a number: " + it->second);
    }
  }

  long long get_int(const std::string& k, long long dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t pos = 0;
      long long x = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      fail_config("config key '" + k + "': not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& k, bool dflt) const {
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail_config("config key '" + k + "': not a boolean: " + v);
  }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  static std::string strip_comment(const std::string& s) {
    auto h = s.find('#');
    return h == std::string::npos ? s : s.substr(0, h);
  }
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> kv_;
};

}  // namespace sk
