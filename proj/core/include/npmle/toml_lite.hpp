#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace npmle {

// The TOML subset used by experiment configs: [table] and [a.b] headers,
// key = value with strings, integers, floats, booleans and (nested, possibly
// multi-line) arrays, and # comments. Keys are flattened to "table.key".
struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, std::vector<TomlValue>> v;

  bool is_array() const { return std::holds_alternative<std::vector<TomlValue>>(v); }
  double as_double() const;
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const std::vector<TomlValue>& as_array() const;
  std::vector<double> as_doubles() const;
};

using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(std::istream& in);
TomlTable parse_toml_string(const std::string& text);

}  // namespace npmle
