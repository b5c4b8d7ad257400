#pragma once

#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace mlipgen {

/// Keyed text configuration: `[section]` headers, `key = value` lines with
/// numbers, quoted strings, booleans or flat arrays, and `#` comments.
class Config {
 public:
  using Value = std::variant<double, std::string, bool, std::vector<double>, std::vector<std::string>>;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, Value>& values() const { return values_; }

  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  /// Throws ConfigParse naming the first key that is not in `known`.
  void require_known(const std::set<std::string>& known) const;

  /// FNV-1a hash of the source text, 16 hex digits.
  const std::string& hash() const { return hash_; }
  const std::string& text() const { return text_; }

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

 private:
  std::map<std::string, Value> values_;
  std::string text_;
  std::string hash_;
};

std::string fnv1a_hex(const std::string& data);

}  // namespace mlipgen
