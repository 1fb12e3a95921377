#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "dwd/game.hpp"

namespace dwd::play {

struct PlayResult {
  bool completed = false;  // false when the human quit
  std::optional<game::Transcript> transcript;
};

/// Terminal game: the human answers for the marked secret image. Invalid
/// answers are reprompted; "quit" ends the game without persisting anything.
PlayResult run(const game::Player& player, const world::Pool& pool, std::size_t rounds,
               std::uint64_t seed, std::istream& in, std::ostream& out,
               const std::optional<std::filesystem::path>& store = std::nullopt);

}  // namespace dwd::play
