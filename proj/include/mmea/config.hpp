#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mmea {

/// Flat `key = value` configuration. Lines starting with '#' and blank lines are
/// ignored; a trailing `# ...` after a value is stripped.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(const std::string& text, std::filesystem::path base_dir = {});
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<long long> get_int_list(const std::string& key, std::vector<long long> fallback) const;

  /// Path-valued key resolved against the directory of the config file.
  std::optional<std::filesystem::path> get_path(const std::string& key) const;

  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

std::vector<long long> parse_int_list(const std::string& text);

}  // namespace mmea
