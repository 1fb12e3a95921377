#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dwd/rng.hpp"
#include "dwd/tensor.hpp"

namespace dwd::ad {

/// Named trainable parameters plus Adam moment slots.
class ParamStore {
 public:
  /// Creates a parameter initialized uniformly in [-bound, bound].
  Tensor create(const std::string& name, Shape shape, double bound, RngStream& rng);
  Tensor create_constant(const std::string& name, Shape shape, double value);
  /// Inserts an existing value; throws if the name is taken.
  Tensor insert(const std::string& name, const Tensor& value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  void erase_prefix(const std::string& prefix);

  const std::map<std::string, Tensor>& params() const { return params_; }
  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(const std::string& prefix) const;
  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const;

  std::uint64_t step() const { return step_; }

  void zero_grad();
  /// Scales unfrozen gradients so their global L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm, const std::set<std::string>& frozen);

  struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };
  /// Adam update on every parameter not named in `frozen`. Frozen
  /// parameters are left bitwise untouched. Throws std::logic_error if an
  /// unfrozen parameter received no gradient. Zeroes all gradients.
  void adam_step(const AdamConfig& cfg, const std::set<std::string>& frozen);

  /// Deep copy of values under new names (prefix + name); no moments.
  void copy_into(ParamStore& dst, const std::string& prefix) const;
  ParamStore clone() const;

  /// Binary checkpoint: "DWD1", u32 version, u32 count, then per parameter
  /// u32 name length, name bytes, u32 rank, u64 dims, little-endian f64 data.
  std::vector<std::uint8_t> serialize() const;
  static ParamStore deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  /// SHA-256 (hex) over names and raw values of parameters matching `filter`.
  std::string hash(const std::function<bool(const std::string&)>& filter) const;
  std::string hash_prefix(const std::string& prefix) const;

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
  std::uint64_t step_ = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dwd::ad
