#include "dwd/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dwd/param_store.hpp"

namespace dwd::io {

void Manifest::add_artifact(const std::filesystem::path& root, const std::string& rel) {
  hashes[rel] = ad::sha256_file(root / rel);
}

std::string Manifest::to_string() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries) os << k << " = " << v << "\n";
  for (const auto& [rel, h] : hashes) os << "sha256 " << h << " " << rel << "\n";
  return os.str();
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << to_string();
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("sha256 ", 0) == 0) {
      auto sp = line.find(' ', 7);
      if (sp == std::string::npos) throw std::runtime_error("malformed manifest line: " + line);
      m.hashes[line.substr(sp + 1)] = line.substr(7, sp - 7);
      continue;
    }
    auto eq = line.find(" = ");
    if (eq != std::string::npos) m.entries[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

bool Manifest::verify(const std::filesystem::path& root) const {
  for (const auto& [rel, h] : hashes) {
    if (!std::filesystem::exists(root / rel) || ad::sha256_file(root / rel) != h) return false;
  }
  return true;
}

std::string run_directory_name(std::uint64_t seed) {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return std::string(buf) + "-seed" + std::to_string(seed);
}

}  // namespace dwd::io
