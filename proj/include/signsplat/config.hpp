#pragma once
// Flat TOML-style configuration: "[section]" headers, "key = value" lines,
// '#' comments. Keys are addressed as "section.key".

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "signsplat/common.hpp"

namespace signsplat {

enum class ConfigType { Real, Integer, Boolean, String, RealList };

struct ConfigKey {
  std::string name;
  ConfigType type;
  std::string default_value;
  std::string help;
  /// Subcommands that read this key.
  std::vector<std::string> commands;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

/// Levenshtein distance over bytes.
std::size_t edit_distance(const std::string& a, const std::string& b);

/// Closest known key to `name`.
std::string suggest_key(const std::string& name);

/// "key (type, default): help" lines for the keys a subcommand reads.
std::string config_help(const std::string& command);

class Config {
 public:
  /// All keys at their defaults.
  Config();

  static Config load(const std::filesystem::path& path);

  /// Parses config text over the current values. `origin` names the source
  /// in error messages.
  void merge_text(const std::string& text, const std::string& origin);

  /// Sets one key from text. Unknown keys and ill-typed values throw
  /// InputError (with the nearest key suggested).
  void set(const std::string& key, const std::string& value);

  /// "key=value" override.
  void apply_override(const std::string& assignment);

  double real(const std::string& key) const;
  long integer(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::string string(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;

  /// Canonical config text of all values.
  std::string dump() const;

 private:
  const ConfigKey& lookup(const std::string& key) const;
  const std::string& raw(const std::string& key, ConfigType type) const;

  std::map<std::string, std::string> values_;
};

}  // namespace signsplat
