#pragma once

#include <map>
#include <string>
#include <vector>

namespace tnmpc {

/// Flat `key = value` text, one entry per line, `#` starts a comment.
/// Vector values are comma-separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueConfig load(const std::string& file);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  /// Throws ConfigError if the entry does not hold exactly `size` numbers.
  std::vector<double> get_vector(const std::string& key, std::size_t size,
                                 const std::vector<double>& fallback) const;

  /// Keys that were never read through a getter, for typo detection.
  std::vector<std::string> unused_keys() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

}  // namespace tnmpc
