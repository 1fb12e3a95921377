#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace dwd::io {

/// Run manifest: `key = value` lines plus one `sha256 <hex> <relative path>`
/// line per artifact.
struct Manifest {
  std::map<std::string, std::string> entries;
  std::map<std::string, std::string> hashes;  // relative path -> hex digest

  void set(const std::string& key, const std::string& value) { entries[key] = value; }
  /// Hashes `root / rel` and records it under `rel`.
  void add_artifact(const std::filesystem::path& root, const std::string& rel);
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);
  /// Recomputes every artifact hash under `root`; false on any mismatch.
  bool verify(const std::filesystem::path& root) const;
};

/// `<timestamp>-seed<seed>` directory name, UTC.
std::string run_directory_name(std::uint64_t seed);

}  // namespace dwd::io
