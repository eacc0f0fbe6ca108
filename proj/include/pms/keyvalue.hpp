#pragma once

// Flat `key = value` text used by run configs, the model container's
// config block and machine-readable reports.

#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pms/dataio/motion.hpp"
#include "pms/numerics/errors.hpp"

namespace pms::kv {

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// One `key = value` per line; `#` starts a comment; blank lines ignored.
inline KeyValues parse(std::istream& in) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    out[key] = value;
  }
  return out;
}

inline KeyValues parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

inline std::string format(const KeyValues& values) {
  std::string out;
  for (const auto& [k, v] : values) out += k + " = " + v + "\n";
  return out;
}

inline double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  if (!data::parse_double(text, v)) throw ConfigError(key + ": not a finite number: '" + text + "'");
  return v;
}

inline std::size_t to_size(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  if (!data::parse_size(text, v)) throw ConfigError(key + ": not a non-negative integer: '" + text + "'");
  return v;
}

inline std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) throw ConfigError(key + ": not an unsigned integer: '" + text + "'");
  return v;
}

inline bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) out.push_back(to_double(key, s));
  return out;
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) out.push_back(to_size(key, s));
  return out;
}

inline std::string from_double(double v) { return data::format_double(v); }
inline std::string from_bool(bool v) { return v ? "true" : "false"; }

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += from_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

}  // namespace pms::kv
