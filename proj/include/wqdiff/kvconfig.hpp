#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wqdiff/error.hpp"
#include "wqdiff/text.hpp"

namespace wqdiff {

/// Flat `key = value` configuration text. Lines starting with `#` are
/// comments; lists are comma-separated. Keys are conventionally dotted
/// (`estuary.river.salinity`). Typed getters throw ConfigError naming the key.
class KvConfig {
public:
  KvConfig() = default;

  static KvConfig parse(std::string_view text) {
    KvConfig cfg;
    for_each_data_line(text, [&](std::size_t row, std::string_view line) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("line " + std::to_string(row) + ": expected key = value");
      const std::string key(trim(line.substr(0, eq)));
      if (key.empty()) throw ConfigError("line " + std::to_string(row) + ": empty key");
      auto value = trim(line.substr(eq + 1));
      if (const auto hash = value.find(" #"); hash != std::string_view::npos) value = trim(value.substr(0, hash));
      cfg.values_[key] = std::string(value);
    });
    return cfg;
  }

  static KvConfig load(const std::string& path) { return parse(read_file(path)); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = find(key);
    return it ? *it : fallback;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = find(key);
    if (!it) return fallback;
    const auto v = parse_double(*it);
    if (!v) throw ConfigError(key + ": expected a number, got '" + *it + "'");
    return *v;
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto it = find(key);
    if (!it) return fallback;
    const auto v = parse_int(*it);
    if (!v) throw ConfigError(key + ": expected an integer, got '" + *it + "'");
    return *v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = find(key);
    if (!it) return fallback;
    if (*it == "true" || *it == "1" || *it == "yes") return true;
    if (*it == "false" || *it == "0" || *it == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + *it + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto it = find(key);
    if (!it) return fallback;
    std::vector<double> out;
    if (trim(*it).empty()) return out;
    for (auto part : split(*it, ',')) {
      const auto v = parse_double(part);
      if (!v) throw ConfigError(key + ": expected a list of numbers, got '" + *it + "'");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<std::string> get_strings(const std::string& key, std::vector<std::string> fallback) const {
    const auto it = find(key);
    if (!it) return fallback;
    std::vector<std::string> out;
    if (trim(*it).empty()) return out;
    for (auto part : split(*it, ',')) out.emplace_back(part);
    return out;
  }

  /// Keys that no getter has asked for; reported as likely typos.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

  /// Sub-configuration of every key under `prefix.`, with the prefix removed.
  KvConfig section(const std::string& prefix) const {
    KvConfig sub;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : values_) {
      if (k.compare(0, p.size(), p) == 0) {
        sub.values_[k.substr(p.size())] = v;
        used_.insert(k);
      }
    }
    return sub;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

private:
  const std::string* find(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace wqdiff
