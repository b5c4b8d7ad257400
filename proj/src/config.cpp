#include "mlipgen/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "mlipgen/errors.hpp"

namespace mlipgen {

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw Error(ErrorKind::ConfigParse, "line " + std::to_string(line) + ": " + what);
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (...) {
    return false;
  }
  return used == s.size();
}

Config::Value parse_scalar(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  if (s == "true") return true;
  if (s == "false") return false;
  double d;
  if (parse_number(s, d)) return d;
  fail(line, "cannot parse value '" + s + "'");
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  cfg.text_ = text;
  cfg.hash_ = fnv1a_hex(text);
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) fail(line, "empty section name");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (key.empty()) fail(line, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.values_.count(full)) fail(line, "duplicate key '" + full + "'");
    const std::string value = trim(s.substr(eq + 1));
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') fail(line, "arrays must fit on one line");
      const std::string body = trim(value.substr(1, value.size() - 2));
      std::vector<double> nums;
      std::vector<std::string> strs;
      if (!body.empty()) {
        std::stringstream items(body);
        std::string item;
        while (std::getline(items, item, ',')) {
          if (trim(item).empty()) continue;
          const Value v = parse_scalar(item, line);
          if (std::holds_alternative<double>(v))
            nums.push_back(std::get<double>(v));
          else if (std::holds_alternative<std::string>(v))
            strs.push_back(std::get<std::string>(v));
          else
            fail(line, "arrays hold numbers or strings");
        }
      }
      if (!nums.empty() && !strs.empty()) fail(line, "mixed array in '" + full + "'");
      if (!strs.empty())
        cfg.values_[full] = strs;
      else
        cfg.values_[full] = nums;
    } else {
      cfg.values_[full] = parse_scalar(value, line);
    }
  }
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigParse, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

namespace {

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw Error(ErrorKind::ConfigParse, "config key '" + key + "' must be " + expected);
}

}  // namespace

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!std::holds_alternative<double>(it->second)) type_error(key, "a number");
  return std::get<double>(it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!std::holds_alternative<double>(it->second)) type_error(key, "an integer");
  const double d = std::get<double>(it->second);
  if (d != std::floor(d) || std::abs(d) > 2e9) type_error(key, "an integer");
  return static_cast<int>(d);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!std::holds_alternative<bool>(it->second)) type_error(key, "true or false");
  return std::get<bool>(it->second);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (!std::holds_alternative<std::string>(it->second)) type_error(key, "a quoted string");
  return std::get<std::string>(it->second);
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (std::holds_alternative<double>(it->second)) return {std::get<double>(it->second)};
  if (!std::holds_alternative<std::vector<double>>(it->second)) type_error(key, "a numeric array");
  return std::get<std::vector<double>>(it->second);
}

std::vector<int> Config::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (double d : get_doubles(key, {})) {
    if (d != std::floor(d)) type_error(key, "an integer array");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (std::holds_alternative<std::string>(it->second)) return {std::get<std::string>(it->second)};
  if (auto* v = std::get_if<std::vector<double>>(&it->second); v && v->empty()) return {};
  if (!std::holds_alternative<std::vector<std::string>>(it->second)) type_error(key, "a string array");
  return std::get<std::vector<std::string>>(it->second);
}

void Config::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, v] : values_)
    if (!known.count(key)) throw Error(ErrorKind::ConfigParse, "unknown config key '" + key + "'");
}

}  // namespace mlipgen
