/* Copyright 2026 The CILF Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");

You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#ifndef CILF_SRC_KV_UTIL_HPP_
#define CILF_SRC_KV_UTIL_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cilf/error.hpp"
#include "text_util.hpp"

// Typed lookups in flat key/value maps. Errors name "<section>.<key>".
namespace cilf::kv {

using Map = std::map<std::string, std::string>;

inline std::string field(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

inline std::uint64_t get_u64(const Map& m, const std::string& section, const std::string& key,
                             std::uint64_t fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  std::int64_t v = 0;
  if (!text::parse_int(it->second, v) || v < 0) {
    throw ConfigError(field(section, key) + ": expected a non-negative integer, got '" +
                      it->second + "'");
  }
  return static_cast<std::uint64_t>(v);
}

inline std::size_t get_size(const Map& m, const std::string& section, const std::string& key,
                            std::size_t fallback) {
  return static_cast<std::size_t>(get_u64(m, section, key, fallback));
}

inline double get_double(const Map& m, const std::string& section, const std::string& key,
                         double fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  double v = 0.0;
  if (!text::parse_double(it->second, v)) {
    throw ConfigError(field(section, key) + ": expected a number, got '" + it->second + "'");
  }
  return v;
}

inline bool get_bool(const Map& m, const std::string& section, const std::string& key,
                     bool fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(field(section, key) + ": expected true or false, got '" + it->second + "'");
}

inline std::string get_string(const Map& m, const std::string& key, std::string fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

inline std::vector<std::size_t> get_index_list(const Map& m, const std::string& section,
                                               const std::string& key,
                                               std::vector<std::size_t> fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  std::vector<std::size_t> out;
  if (text::trim(it->second).empty()) return out;
  for (auto part : text::split(it->second, ',')) {
    std::int64_t v = 0;
    if (!text::parse_int(part, v) || v < 0) {
      throw ConfigError(field(section, key) + ": expected comma-separated indices, got '" +
                        it->second + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

inline std::string join_indices(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) s += ',';
    s += text::format_double(v[i]);
  }
  return s;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& value) {
  std::vector<double> out;
  if (text::trim(value).empty()) return out;
  for (auto part : text::split(value, ',')) {
    double d = 0.0;
    if (!text::parse_double(part, d)) throw ParseError(key + ": bad number '" + value + "'");
    out.push_back(d);
  }
  return out;
}

}  // namespace cilf::kv

#endif  // CILF_SRC_KV_UTIL_HPP_
