#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "loupe/common.hpp"

namespace loupe {

// Flat key=value configuration with a fixed schema: unknown keys and
// malformed or out-of-vocabulary values are rejected at set time. Files are
// plain text, one `key = value` per line, `#` comments.
class Config {
 public:
  static Config defaults();
  static Config from_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  void apply_override(const std::string& key_eq_value);  // "key=value"

  const std::string& get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Every key in sorted order, one per line. Written as the resolved-config
  // snapshot of each run.
  std::string resolved_text() const;

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace loupe
