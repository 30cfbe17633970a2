#pragma once

// Plain key=value configuration text: one pair per line, '#' starts a
// comment, blank lines ignored. Keys are unique; rendering sorts keys so a
// config round-trips to a canonical form.

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gaitmae/io_util.hpp"

namespace gaitmae {

using ConfigMap = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}
}  // namespace detail

inline ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");
  }
  return out;
}

inline std::string render_config(const ConfigMap& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg) out += k + "=" + v + "\n";
  return out;
}

inline void reject_unknown_keys(const ConfigMap& cfg,
                                const std::set<std::string>& allowed,
                                const std::string& context) {
  for (const auto& [k, v] : cfg) {
    (void)v;
    if (!allowed.count(k))
      throw std::invalid_argument(context + ": unknown key '" + k + "'");
  }
}

inline std::string config_get(const ConfigMap& cfg, const std::string& key,
                              const std::string& fallback) {
  auto it = cfg.find(key);
  return it == cfg.end() ? fallback : it->second;
}

inline long long config_get_int(const ConfigMap& cfg, const std::string& key,
                                long long fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::size_t used = 0;
  long long v;
  try {
    v = std::stoll(it->second, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer: '" +
                                it->second + "'");
  }
  if (used != it->second.size())
    throw std::invalid_argument("config: key '" + key + "' is not an integer: '" +
                                it->second + "'");
  return v;
}

inline double config_get_double(const ConfigMap& cfg, const std::string& key,
                                double fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(it->second, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not a number: '" +
                                it->second + "'");
  }
  if (used != it->second.size())
    throw std::invalid_argument("config: key '" + key + "' is not a number: '" +
                                it->second + "'");
  return v;
}

inline bool config_get_bool(const ConfigMap& cfg, const std::string& key, bool fallback) {
  auto it = cfg.find(key);
  if (it == cfg.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' is not a boolean: '" +
                              it->second + "'");
}

}  // namespace gaitmae
