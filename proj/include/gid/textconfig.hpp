#pragma once

// key=value text with optional [section] headers and '#' comments. Used for
// noise profiles, run configs and the config block inside checkpoints.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gid {

class KeyValueText {
 public:
  struct Entry {
    std::string section;  // empty for the top level
    std::string key;
    std::string value;
  };

  static KeyValueText parse(const std::string& text);
  static KeyValueText load(const std::string& path);
  std::string serialize() const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  void set(const std::string& key, const std::string& value) { set("", key, value); }
  void set(const std::string& key, double value) { set("", key, format_double(value)); }

  bool has(const std::string& section, const std::string& key) const;
  bool has(const std::string& key) const { return has("", key); }
  /// Throws ConfigError when missing.
  const std::string& get(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& key) const { return get("", key); }

  double get_double(const std::string& section, const std::string& key) const;
  double get_double(const std::string& key) const { return get_double("", key); }
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;

  /// Section names in first-appearance order (top level excluded).
  std::vector<std::string> sections() const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Shortest decimal text that parses back to the same double.
  static std::string format_double(double v);

 private:
  std::vector<Entry> entries_;
};

/// Path of a shipped data file; $GID_DATA_DIR overrides the build-time path.
std::string data_path(const std::string& name);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace gid
