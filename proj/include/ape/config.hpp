// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ape {

/// Flat TOML subset: `key = value` lines with strings, integers, floats,
/// booleans and (possibly multi-line) arrays of those; `#` comments. Tables
/// are rejected, as are duplicate keys.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  /// Raw TOML literal for `key`.
  const std::string& raw(const std::string& key) const;
  /// Inserts or replaces. `raw` must be a TOML literal.
  void set_raw(const std::string& key, std::string raw);
  /// `key=value` override from the command line. Bare words become strings.
  void apply_override(const std::string& assignment);

  std::vector<std::string> keys() const;
  const std::string& origin() const noexcept { return origin_; }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

namespace toml {
std::string parse_string(const std::string& raw);
std::int64_t parse_int(const std::string& raw);
double parse_double(const std::string& raw);
bool parse_bool(const std::string& raw);
std::vector<std::string> parse_array(const std::string& raw);  // raw element literals
std::vector<std::string> parse_string_array(const std::string& raw);
std::vector<double> parse_double_array(const std::string& raw);

std::string quote(const std::string& s);
/// Shortest decimal that round-trips a double; always a valid TOML float.
std::string format_double(double v);
std::string format_string_array(const std::vector<std::string>& values);
std::string format_double_array(const std::vector<double>& values);
}  // namespace toml

}  // namespace ape
