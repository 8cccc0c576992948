#include "gid/textconfig.hpp"

#include "gid/errors.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace gid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueText KeyValueText::parse(const std::string& text) {
  KeyValueText kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) {
        throw FormatError("line " + std::to_string(lineno) + ": malformed section header '" + s + "'");
      }
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("line " + std::to_string(lineno) + ": expected key=value, got '" + s + "'");
    }
    const std::string key = trim(s.substr(0, eq));
    if (kv.has(section, key)) {
      throw FormatError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv.entries_.push_back({section, key, trim(s.substr(eq + 1))});
  }
  return kv;
}

KeyValueText KeyValueText::load(const std::string& path) { return parse(read_file(path)); }

std::string KeyValueText::serialize() const {
  std::string out;
  std::string section;
  for (const auto& e : entries_) {
    if (e.section.empty()) out += e.key + "=" + e.value + "\n";
  }
  for (const auto& name : sections()) {
    out += "\n[" + name + "]\n";
    for (const auto& e : entries_) {
      if (e.section == name) out += e.key + "=" + e.value + "\n";
    }
  }
  return out;
}

void KeyValueText::set(const std::string& section, const std::string& key, const std::string& value) {
  for (auto& e : entries_) {
    if (e.section == section && e.key == key) {
      e.value = value;
      return;
    }
  }
  entries_.push_back({section, key, value});
}

bool KeyValueText::has(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) return true;
  }
  return false;
}

const std::string& KeyValueText::get(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) return e.value;
  }
  throw ConfigError("missing key '" + (section.empty() ? key : section + "." + key) + "'");
}

double KeyValueText::get_double(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') throw ConfigError("key '" + key + "': not a number: " + v);
  return d;
}

double KeyValueText::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double("", key) : fallback;
}

std::int64_t KeyValueText::get_int(const std::string& key) const {
  const std::string& v = get(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': not an integer: " + v);
  }
  return out;
}

std::int64_t KeyValueText::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::string KeyValueText::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

std::vector<std::string> KeyValueText::sections() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.section.empty()) continue;
    bool seen = false;
    for (const auto& s : out) seen = seen || s == e.section;
    if (!seen) out.push_back(e.section);
  }
  return out;
}

std::string KeyValueText::format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string data_path(const std::string& name) {
  const char* env = std::getenv("GID_DATA_DIR");
  const std::string dir = (env != nullptr && *env != '\0') ? env : GID_DATA_DIR;
  return dir + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path);
  out << contents;
  if (!out) throw InvalidInput("write failed: " + path);
}

}  // namespace gid
