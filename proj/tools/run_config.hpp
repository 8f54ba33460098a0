#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace claimrl::cli {

/// Usage or configuration mistake; maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default.
const std::vector<KeyInfo>& known_keys();

/// Flat key = value settings. '#' starts a comment; blank lines are ignored.
class RunConfig {
 public:
  RunConfig();  // defaults

  /// Merges a file over the current values. Unknown keys, duplicate keys and
  /// malformed lines raise ConfigError naming the line.
  void load_file(const std::filesystem::path& path);
  void parse_text(const std::string& text, const std::string& origin);
  /// Sets one key; unknown keys raise ConfigError.
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  std::int64_t integer(const std::string& key) const;
  std::uint64_t uinteger(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  bool has_value(const std::string& key) const { return !str(key).empty(); }

  nlohmann::ordered_json snapshot() const;
  /// key = value lines in key order.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace claimrl::cli
