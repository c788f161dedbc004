// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ape/error.hpp"

namespace ape {

namespace {

std::string trim(const std::string& s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

// Strips a trailing comment while respecting quoted strings.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (c == '#' && !in_string) {
      return line.substr(0, i);
    }
  }
  return line;
}

int bracket_depth(const std::string& s) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string && c == '\\') {
      ++i;
    } else if (c == '"') {
      in_string = !in_string;
    } else if (!in_string && c == '[') {
      ++depth;
    } else if (!in_string && c == ']') {
      --depth;
    }
  }
  return depth;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

void validate_literal(const std::string& raw, const std::string& where) {
  if (raw.empty()) throw ConfigError(where + ": missing value");
  const char c = raw.front();
  try {
    if (c == '"') {
      toml::parse_string(raw);
    } else if (c == '[') {
      for (const auto& e : toml::parse_array(raw)) validate_literal(e, where);
    } else if (raw == "true" || raw == "false") {
    } else {
      toml::parse_double(raw);
    }
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = origin + ":" + std::to_string(line_no);
    std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') throw ConfigError(where + ": tables are not supported");
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    while (bracket_depth(value) > 0 && std::getline(in, line)) {
      ++line_no;
      value += " " + trim(strip_comment(line));
    }
    if (bracket_depth(value) != 0) throw ConfigError(where + ": unbalanced brackets");
    if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
    validate_literal(value, where);
    if (!kv.values_.emplace(key, value).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& KeyValueFile::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

void KeyValueFile::set_raw(const std::string& key, std::string raw) {
  if (!valid_key(key)) throw ConfigError("invalid key '" + key + "'");
  validate_literal(raw, key);
  values_[key] = std::move(raw);
}

void KeyValueFile::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  const bool literal = !value.empty() &&
                       (value.front() == '"' || value.front() == '[' || value == "true" ||
                        value == "false" || [&] {
                          try {
                            toml::parse_double(value);
                            return true;
                          } catch (const ConfigError&) {
                            return false;
                          }
                        }());
  set_raw(key, literal ? value : toml::quote(value));
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

namespace toml {

std::string parse_string(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') {
    throw ConfigError("expected a quoted string, got " + raw);
  }
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '"') throw ConfigError("unescaped quote in string " + raw);
    if (c == '\\') {
      if (i + 2 >= raw.size()) throw ConfigError("dangling escape in " + raw);
      switch (raw[++i]) {
        case '"': c = '"'; break;
        case '\\': c = '\\'; break;
        case 'n': c = '\n'; break;
        case 't': c = '\t'; break;
        default: throw ConfigError("unsupported escape in " + raw);
      }
    }
    out.push_back(c);
  }
  return out;
}

std::int64_t parse_int(const std::string& raw) {
  std::string s;
  for (char c : raw) {
    if (c != '_') s.push_back(c);
  }
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("expected an integer, got " + raw);
  }
  return v;
}

double parse_double(const std::string& raw) {
  std::string s;
  for (char c : raw) {
    if (c != '_') s.push_back(c);
  }
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got " + raw);
  }
  return v;
}

bool parse_bool(const std::string& raw) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  throw ConfigError("expected true or false, got " + raw);
}

std::vector<std::string> parse_array(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') {
    throw ConfigError("expected an array, got " + raw);
  }
  std::vector<std::string> out;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string && c == '\\' && i + 2 < raw.size()) {
      cur.push_back(c);
      cur.push_back(raw[++i]);
      continue;
    }
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  for (const auto& e : out) {
    if (e.empty()) throw ConfigError("empty array element in " + raw);
  }
  return out;
}

std::vector<std::string> parse_string_array(const std::string& raw) {
  std::vector<std::string> out;
  for (const auto& e : parse_array(raw)) out.push_back(parse_string(e));
  return out;
}

std::vector<double> parse_double_array(const std::string& raw) {
  std::vector<double> out;
  for (const auto& e : parse_array(raw)) out.push_back(parse_double(e));
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string format_string_array(const std::vector<std::string>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += quote(values[i]);
  }
  return out + "]";
}

std::string format_double_array(const std::vector<double>& values) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += format_double(values[i]);
  }
  return out + "]";
}

}  // namespace toml

}  // namespace ape
