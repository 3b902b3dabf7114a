#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lgmsplit/error.hpp"

namespace lgm::io {

/// Flat "key = value" text with '#' comments. Every lookup error names the
/// source line and the field.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string source = "config") {
    KeyValueConfig cfg;
    cfg.source_ = std::move(source);
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(cfg.where(line_no) + ": expected 'key = value', got '" + std::string(line) + "'");
      }
      const std::string key(trim(line.substr(0, eq)));
      const std::string value(trim(line.substr(eq + 1)));
      if (key.empty()) throw ConfigError(cfg.where(line_no) + ": missing key before '='");
      if (cfg.entries_.count(key)) {
        throw ConfigError(cfg.where(line_no) + ": field '" + key + "' already set on line " +
                          std::to_string(cfg.entries_[key].line));
      }
      cfg.entries_[key] = {value, line_no};
    }
    return cfg;
  }

  static KeyValueConfig load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path.string());
  }

  /// Command-line override; replaces any value from the file.
  void set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, e] : entries_) {
      if (!known.count(k)) throw ConfigError(where(e.line) + ": unknown field '" + k + "'");
    }
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  std::string get_choice(const std::string& key, const std::string& fallback,
                         const std::vector<std::string>& allowed) const {
    const std::string v = get_string(key, fallback);
    for (const auto& a : allowed) {
      if (v == a) return v;
    }
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError(field_where(key) + ": expected one of {" + list + "}, got '" + v + "'");
  }

  long get_int(const std::string& key, long fallback, long min_value, long max_value) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    long v = 0;
    const std::string& s = it->second.value;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(field_where(key) + ": expected an integer, got '" + s + "'");
    }
    if (v < min_value || v > max_value) {
      throw ConfigError(field_where(key) + ": value " + s + " outside [" + std::to_string(min_value) + ", " +
                        std::to_string(max_value) + "]");
    }
    return v;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::uint64_t v = 0;
    const std::string& s = it->second.value;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(field_where(key) + ": expected an unsigned 64-bit integer, got '" + s + "'");
    }
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    return to_double(key, it->second.value);
  }

  /// Like get_double but requires value > lower_exclusive.
  double get_double_above(const std::string& key, double fallback, double lower_exclusive) const {
    const double v = get_double(key, fallback);
    if (!(v > lower_exclusive)) {
      throw ConfigError(field_where(key) + ": must be greater than " + std::to_string(lower_exclusive));
    }
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    const std::string& v = it->second.value;
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(field_where(key) + ": expected true or false, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<double> out;
    std::string_view rest = it->second.value;
    while (true) {
      const auto comma = rest.find(',');
      out.push_back(to_double(key, trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  std::vector<std::string> get_list(const std::string& key, std::vector<std::string> fallback) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    std::vector<std::string> out;
    std::string_view rest = it->second.value;
    while (true) {
      const auto comma = rest.find(',');
      const auto item = trim(rest.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  /// Sorted "key=value" lines; the basis of the configuration fingerprint.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, e] : entries_) out += k + "=" + e.value + "\n";
    return out;
  }

  std::string field_where(const std::string& key) const {
    const auto it = entries_.find(key);
    const int line = it == entries_.end() ? 0 : it->second.line;
    return where(line) + ": field '" + key + "'";
  }

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::string where(int line) const {
    return line > 0 ? source_ + ":" + std::to_string(line) : std::string("command line");
  }

  double to_double(const std::string& key, std::string_view s) const {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(field_where(key) + ": expected a number, got '" + std::string(s) + "'");
    }
    return v;
  }

  std::map<std::string, Entry> entries_;
  std::string source_ = "config";
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace lgm::io
