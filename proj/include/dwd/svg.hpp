#pragma once

#include <string>

#include "dwd/world.hpp"

namespace dwd::render {

/// Fixed 200x200 canvas, slots on a 2x2 grid; absent slots draw nothing.
std::string image_svg(const world::WorldImage& image, bool highlight = false);

/// "large red circle, small blue square" style listing of present slots.
std::string describe(const world::WorldImage& image);

}  // namespace dwd::render
