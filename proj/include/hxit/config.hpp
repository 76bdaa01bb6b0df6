#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hxit {

/// Flat `key = value` run configuration. UTF-8 lines, '#' comments, blank
/// lines ignored; sections are expressed by key prefixes (sim., gateway.,
/// pipeline., render., clock.).
class Config {
public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Required variants throw ConfigInvalid when the key is absent.
  std::string require_string(const std::string& key) const;
  int64_t require_int(const std::string& key) const;
  double require_double(const std::string& key) const;

  /// Comma-separated list, items trimmed.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  /// Keys with the given prefix, in insertion order.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  std::string to_text() const;

private:
  std::vector<std::pair<std::string, std::string>> entries_; // insertion order
  std::map<std::string, size_t> index_;
};

} // namespace hxit
