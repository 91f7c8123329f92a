#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvhet/errors.hpp"

namespace mvhet {

// Minimal TOML subset: [tables], [[arrays of tables]], key = scalar or
// single-line array of scalars. Enough for experiment configs and dataset
// manifests; unknown constructs raise ParseError with line/column.
struct TomlValue {
  enum class Kind { Table, Array, String, Int, Float, Bool };
  Kind kind = Kind::Table;
  std::map<std::string, TomlValue> table;
  std::vector<TomlValue> array;
  std::string str;
  long long int_v = 0;
  double float_v = 0.0;
  bool bool_v = false;

  bool has(const std::string& key) const { return table.count(key) > 0; }
  const TomlValue& at(const std::string& key) const {
    auto it = table.find(key);
    if (it == table.end()) throw Error(ErrorKind::ConfigInvalid, "missing key '" + key + "'");
    return it->second;
  }

  double as_number() const {
    if (kind == Kind::Int) return static_cast<double>(int_v);
    if (kind == Kind::Float) return float_v;
    throw Error(ErrorKind::ConfigInvalid, "expected a number");
  }
  long long as_int() const {
    if (kind != Kind::Int) throw Error(ErrorKind::ConfigInvalid, "expected an integer");
    return int_v;
  }
  const std::string& as_string() const {
    if (kind != Kind::String) throw Error(ErrorKind::ConfigInvalid, "expected a string");
    return str;
  }
  bool as_bool() const {
    if (kind != Kind::Bool) throw Error(ErrorKind::ConfigInvalid, "expected a boolean");
    return bool_v;
  }
};

namespace toml_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

inline TomlValue parse_scalar(const std::string& raw, long line_no) {
  TomlValue v;
  const std::string s = trim(raw);
  if (s.empty()) throw Error(ErrorKind::ParseError, "empty value", line_no);
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"')
      throw Error(ErrorKind::ParseError, "unterminated string", line_no);
    v.kind = TomlValue::Kind::String;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
      if (s[i] == '\\' && i + 2 < s.size()) {
        ++i;
        switch (s[i]) {
          case 'n': v.str.push_back('\n'); break;
          case 't': v.str.push_back('\t'); break;
          case '"': v.str.push_back('"'); break;
          case '\\': v.str.push_back('\\'); break;
          default: throw Error(ErrorKind::ParseError, "bad escape", line_no, i);
        }
      } else {
        v.str.push_back(s[i]);
      }
    }
    return v;
  }
  if (s == "true" || s == "false") {
    v.kind = TomlValue::Kind::Bool;
    v.bool_v = s == "true";
    return v;
  }
  // int or float
  bool is_float = s.find('.') != std::string::npos || s.find('e') != std::string::npos ||
                  s.find('E') != std::string::npos;
  char* end = nullptr;
  if (is_float) {
    v.kind = TomlValue::Kind::Float;
    v.float_v = std::strtod(s.c_str(), &end);
  } else {
    v.kind = TomlValue::Kind::Int;
    v.int_v = std::strtoll(s.c_str(), &end, 10);
  }
  if (end == nullptr || *end != '\0')
    throw Error(ErrorKind::ParseError, "bad value '" + s + "'", line_no);
  return v;
}

inline std::vector<std::string> split_path(const std::string& s, long line_no) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == '.') {
      if (cur.empty()) throw Error(ErrorKind::ParseError, "empty path segment", line_no);
      parts.push_back(cur);
      cur.clear();
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') {
      cur.push_back(c);
    } else {
      throw Error(ErrorKind::ParseError, std::string("bad character '") + c + "' in name",
                  line_no);
    }
  }
  if (cur.empty()) throw Error(ErrorKind::ParseError, "empty path segment", line_no);
  parts.push_back(cur);
  return parts;
}

}  // namespace toml_detail

inline TomlValue parse_toml(std::istream& in) {
  using namespace toml_detail;
  TomlValue root;
  TomlValue* current = &root;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      bool is_array = s.size() > 1 && s[1] == '[';
      const std::string close = is_array ? "]]" : "]";
      if (s.substr(s.size() - close.size()) != close)
        throw Error(ErrorKind::ParseError, "unterminated table header", line_no);
      const std::string inner =
          trim(s.substr(is_array ? 2 : 1, s.size() - 2 * (is_array ? 2 : 1)));
      auto parts = split_path(inner, line_no);
      TomlValue* node = &root;
      for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool last = i + 1 == parts.size();
        TomlValue& child = node->table[parts[i]];
        if (last && is_array) {
          if (child.kind == TomlValue::Kind::Table && child.table.empty() && child.array.empty())
            child.kind = TomlValue::Kind::Array;
          if (child.kind != TomlValue::Kind::Array)
            throw Error(ErrorKind::ParseError, "'" + inner + "' is not an array of tables",
                        line_no);
          child.array.emplace_back();
          node = &child.array.back();
        } else if (child.kind == TomlValue::Kind::Array) {
          if (child.array.empty())
            throw Error(ErrorKind::ParseError, "empty table array '" + parts[i] + "'", line_no);
          node = &child.array.back();
        } else {
          node = &child;
        }
      }
      current = node;
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::ParseError, "expected key = value", line_no);
    const std::string key = trim(s.substr(0, eq));
    const std::string raw = trim(s.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::ParseError, "empty key", line_no);
    auto key_parts = split_path(key, line_no);
    if (key_parts.size() != 1)
      throw Error(ErrorKind::ParseError, "dotted keys are not supported", line_no);
    if (current->table.count(key))
      throw Error(ErrorKind::ParseError, "duplicate key '" + key + "'", line_no);
    TomlValue v;
    if (!raw.empty() && raw.front() == '[') {
      if (raw.back() != ']') throw Error(ErrorKind::ParseError, "unterminated array", line_no);
      v.kind = TomlValue::Kind::Array;
      std::string body = raw.substr(1, raw.size() - 2);
      std::string item;
      bool in_str = false;
      for (char c : body) {
        if (c == '"') in_str = !in_str;
        if (c == ',' && !in_str) {
          if (!trim(item).empty()) v.array.push_back(parse_scalar(item, line_no));
          item.clear();
        } else {
          item.push_back(c);
        }
      }
      if (!trim(item).empty()) v.array.push_back(parse_scalar(item, line_no));
    } else {
      v = parse_scalar(raw, line_no);
    }
    current->table[key] = std::move(v);
  }
  return root;
}

inline TomlValue parse_toml_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  return parse_toml(in);
}

inline TomlValue parse_toml_string(const std::string& text) {
  std::istringstream in(text);
  return parse_toml(in);
}

// Schema: maps a table path (dot-joined; "name[]" for array-of-table
// elements) to its allowed keys. Any key outside the schema is rejected.
using TomlSchema = std::map<std::string, std::set<std::string>>;

inline void check_toml_schema(const TomlValue& node, const TomlSchema& schema,
                              const std::string& path = "") {
  auto it = schema.find(path);
  if (it == schema.end())
    throw Error(ErrorKind::ConfigInvalid, "unexpected table '" + path + "'");
  for (const auto& [key, child] : node.table) {
    const std::string child_path = path.empty() ? key : path + "." + key;
    if (child.kind == TomlValue::Kind::Table) {
      check_toml_schema(child, schema, child_path);
    } else if (child.kind == TomlValue::Kind::Array && !child.array.empty() &&
               child.array.front().kind == TomlValue::Kind::Table) {
      for (const TomlValue& el : child.array) check_toml_schema(el, schema, child_path + "[]");
    } else {
      if (!it->second.count(key))
        throw Error(ErrorKind::ConfigInvalid, "unknown key '" + child_path + "'");
    }
  }
}

}  // namespace mvhet
