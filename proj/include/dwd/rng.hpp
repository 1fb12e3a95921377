#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dwd {

/// Counter-based random stream. The draw sequence is a pure function of
/// (seed, name, counter), so streams can be split and replayed freely.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string name);

  std::uint64_t seed() const { return seed_; }
  const std::string& name() const { return name_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; does not advance this stream.
  RngStream split(std::string_view child) const;

 private:
  std::uint64_t seed_;
  std::string name_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dwd
