#pragma once

#include <filesystem>
#include <vector>

#include "dwd/game.hpp"
#include "json.hpp"

namespace dwd::io {

using nlohmann::json;

// Wire form uses 1-based image indices (target_index, final_guess).
json image_to_json(const world::WorldImage& img);
world::WorldImage image_from_json(const json& j);
json pool_to_json(const world::Pool& pool);
world::Pool pool_from_json(const json& j);
json transcript_to_json(const game::Transcript& t);
game::Transcript transcript_from_json(const json& j);

/// Appends one record per line.
void append_transcripts(const std::filesystem::path& path, const std::vector<game::Transcript>& ts);
std::vector<game::Transcript> read_transcripts(const std::filesystem::path& path);

}  // namespace dwd::io
