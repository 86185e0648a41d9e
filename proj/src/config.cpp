#include "cones/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cones/error.hpp"

namespace cones {

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open '", path, "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

KeyValues KeyValues::parse_string(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    if (line[begin] == '#') continue;
    const std::size_t eq = line.find('=', begin);
    require(eq != std::string::npos, "config: ", origin, ":", lineno,
            ": expected key=value, got '", line, "'");
    auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t\r");
      const std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), "config: ", origin, ":", lineno, ": empty key");
    kv.set(key, value);
  }
  return kv;
}

const std::string* KeyValues::find(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

bool KeyValues::has(const std::string& key) const { return find(key) != nullptr; }

void KeyValues::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

void KeyValues::set_long(const std::string& key, long long v) { set(key, std::to_string(v)); }

void KeyValues::set_double(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  set(key, buf);
}

void KeyValues::set_bool(const std::string& key, bool v) { set(key, v ? "true" : "false"); }

std::string KeyValues::get(const std::string& key) const {
  const std::string* v = find(key);
  require(v != nullptr, "config: missing key '", key, "'");
  consumed_.insert(key);
  return *v;
}

std::string KeyValues::get_or(const std::string& key, const std::string& def) const {
  consumed_.insert(key);
  const std::string* v = find(key);
  return v ? *v : def;
}

long long KeyValues::get_long(const std::string& key) const {
  const std::string s = get(key);
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    require(pos == s.size(), "config: key '", key, "': trailing characters in '", s, "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: key '", key, "': cannot parse integer from '", s, "'");
  }
}

long long KeyValues::get_long_or(const std::string& key, long long def) const {
  consumed_.insert(key);
  return has(key) ? get_long(key) : def;
}

double KeyValues::get_double(const std::string& key) const {
  const std::string s = get(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), "config: key '", key, "': trailing characters in '", s, "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail("config: key '", key, "': cannot parse number from '", s, "'");
  }
}

double KeyValues::get_double_or(const std::string& key, double def) const {
  consumed_.insert(key);
  return has(key) ? get_double(key) : def;
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail("config: key '", key, "': cannot parse boolean from '", s, "'");
}

bool KeyValues::get_bool_or(const std::string& key, bool def) const {
  consumed_.insert(key);
  return has(key) ? get_bool(key) : def;
}

void KeyValues::fail_on_unconsumed(const std::string& what) const {
  std::string unknown;
  for (const auto& [k, v] : entries_)
    if (consumed_.find(k) == consumed_.end()) {
      if (!unknown.empty()) unknown += ", ";
      unknown += "'" + k + "'";
    }
  require(unknown.empty(), what, ": unknown key(s) ", unknown);
}

std::string KeyValues::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

void KeyValues::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "config: cannot write '", path, "'");
  out << serialize();
  require(out.good(), "config: write failed for '", path, "'");
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    try {
      out.push_back(std::stoi(cur));
    } catch (...) {
      fail("config: cannot parse integer list element '", cur, "' in '", text, "'");
    }
  }
  require(!out.empty(), "config: empty integer list '", text, "'");
  return out;
}

std::string format_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace cones
