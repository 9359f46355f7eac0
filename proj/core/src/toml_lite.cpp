#include "npmle/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <istream>
#include <sstream>

#include "npmle/error.hpp"

namespace npmle {

double TomlValue::as_double() const {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw InvalidArgument("config: expected a number");
}

std::int64_t TomlValue::as_int() const {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw InvalidArgument("config: expected an integer");
}

bool TomlValue::as_bool() const {
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  throw InvalidArgument("config: expected a boolean");
}

const std::string& TomlValue::as_string() const {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  throw InvalidArgument("config: expected a string");
}

const std::vector<TomlValue>& TomlValue::as_array() const {
  if (const auto* a = std::get_if<std::vector<TomlValue>>(&v)) return *a;
  throw InvalidArgument("config: expected an array");
}

std::vector<double> TomlValue::as_doubles() const {
  std::vector<double> out;
  for (const auto& e : as_array()) out.push_back(e.as_double());
  return out;
}

namespace {

class Parser {
 public:
  Parser(const std::string& s, int line) : s_(s), line_(line) {}

  TomlValue value() {
    skip();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return {string()};
    if (c == '[') return {array()};
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return {true};
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return {false};
    }
    return number();
  }

  void finish() {
    skip();
    if (pos_ < s_.size()) fail("trailing characters");
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidArgument("config line " + std::to_string(line_) + ": " + what);
  }

  void skip() {
    while (pos_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::string string() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        const char e = s_[++pos_];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += s_[pos_];
      }
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::vector<TomlValue> array() {
    ++pos_;
    std::vector<TomlValue> out;
    while (true) {
      skip();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      out.push_back(value());
      skip();
      if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
    }
  }

  TomlValue number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '.' ||
                               s_[end] == '-' || s_[end] == '+' || s_[end] == '_')) {
      ++end;
    }
    std::string tok;
    for (std::size_t i = pos_; i < end; ++i) {
      if (s_[i] != '_') tok += s_[i];
    }
    if (tok.empty()) fail("expected a value");
    pos_ = end;
    const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
    const char* e = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos || tok == "inf" || tok == "nan") {
      std::int64_t i = 0;
      const auto r = std::from_chars(b, e, i);
      if (r.ec == std::errc() && r.ptr == e) return {i};
    }
    double d = 0.0;
    const auto r = std::from_chars(b, e, d);
    if (r.ec != std::errc() || r.ptr != e) fail("cannot parse value '" + tok + "'");
    return {d};
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  }
  return true;
}

// Bracket depth outside strings and comments.
int bracket_balance(const std::string& s) {
  int depth = 0;
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      while (i < s.size() && s[i] != '\n') ++i;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

}  // namespace

TomlTable parse_toml(std::istream& in) {
  TomlTable out;
  std::string prefix;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] == '[') {
      const auto close = t.find(']');
      if (close == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": bad table header");
      const std::string name = trim(t.substr(1, close - 1));
      if (!valid_key(name)) throw InvalidArgument("config line " + std::to_string(lineno) + ": bad table name");
      prefix = name + ".";
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) throw InvalidArgument("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
    std::string rhs = t.substr(eq + 1);
    const int start = lineno;
    while (bracket_balance(rhs) > 0 && std::getline(in, line)) {
      ++lineno;
      rhs += '\n' + line;
    }
    Parser p(rhs, start);
    TomlValue v = p.value();
    p.finish();
    if (!out.emplace(prefix + key, std::move(v)).second) {
      throw InvalidArgument("config line " + std::to_string(start) + ": duplicate key '" + prefix + key + "'");
    }
  }
  return out;
}

TomlTable parse_toml_string(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

}  // namespace npmle
