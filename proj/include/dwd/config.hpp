#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dwd/language_model.hpp"
#include "dwd/trainer.hpp"
#include "dwd/world.hpp"

namespace dwd::config {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

const std::set<std::string>& known_keys();

/// Flat `key = value` settings; `#` starts a comment. Unknown keys are rejected.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "<string>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies "key=value" overrides; later ones win.
  void apply_overrides(const std::vector<std::string>& overrides);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Canonical text form (sorted keys), suitable for manifests.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

world::WorldConfig world_config(const Config& c);
train::TrainConfig train_config(const Config& c);
eval::LmConfig lm_config(const Config& c);

}  // namespace dwd::config
