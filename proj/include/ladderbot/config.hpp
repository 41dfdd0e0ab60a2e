#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ladderbot {

/**
 * @brief Flat key/value configuration in a TOML-like syntax.
 *
 *   # comment
 *   [terrain]
 *   coupling_gain = 12.0      -> key "terrain.coupling_gain"
 *   order = "YXZ"
 *   offsets = [0.0, 0.05, -0.05]
 *
 * Values are kept as text and converted on access; malformed values raise
 * ConfigInvalid naming the key.
 */
class KeyValueConfig {
public:
  static KeyValueConfig parse(std::string_view text, const std::string& source = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  /// Entries of `other` override entries of this config.
  void merge(const KeyValueConfig& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  std::optional<std::string> raw(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& source() const { return source_; }

private:
  std::map<std::string, std::string> values_;
  std::string source_;
};

}  // namespace ladderbot
