#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dvsimc/errors.hpp"
#include "dvsimc/format.hpp"

namespace dvsimc {

/// Flat `section.key = value` text. Lists are comma separated; `#` starts a comment.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& is, const std::string& name = "config") {
    KeyValueFile kv;
    std::string line;
    std::size_t row = 0;
    while (std::getline(is, line)) {
      ++row;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string t = trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        fail(ErrorKind::config, name + " line " + std::to_string(row) + ": expected 'key = value'");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) fail(ErrorKind::config, name + " line " + std::to_string(row) + ": empty key");
      if (kv.values_.count(key)) fail(ErrorKind::config, name + " line " + std::to_string(row) + ": duplicate key '" + key + "'");
      kv.values_[key] = trim(t.substr(eq + 1));
    }
    return kv;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "missing key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? raw(key) : fallback;
  }

  double get_real(const std::string& key, double fallback) const {
    return has(key) ? as_real(key) : fallback;
  }

  double as_real(const std::string& key) const {
    try {
      return parse_real(raw(key), key);
    } catch (const Error& e) {
      fail(ErrorKind::config, e.what());
    }
  }

  long long get_integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    try {
      return parse_integer(raw(key), key);
    } catch (const Error& e) {
      fail(ErrorKind::config, e.what());
    }
  }

  std::size_t get_count(const std::string& key, std::size_t fallback) const {
    const long long v = get_integer(key, static_cast<long long>(fallback));
    if (v < 0) fail(ErrorKind::config, key + ": must be non-negative");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t get_seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::config, key + ": invalid seed '" + s + "'");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = raw(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail(ErrorKind::config, key + ": expected true or false, got '" + s + "'");
  }

  std::vector<double> get_reals(const std::string& key, const std::vector<double>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> out;
    const std::string& s = raw(key);
    if (trim(s).empty()) return out;
    std::size_t pos = 0;
    while (true) {
      const auto comma = s.find(',', pos);
      const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        out.push_back(parse_real(item, key));
      } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return out;
  }

  /// Keys present in the file that no getter asked for.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_real(v[i]);
  }
  return out;
}

}  // namespace dvsimc
