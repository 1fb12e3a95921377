#include "dwd/svg.hpp"

#include <algorithm>
#include <sstream>

namespace dwd::render {

namespace {

const char* fill(world::Color c) {
  switch (c) {
    case world::Color::kRed: return "#d62728";
    case world::Color::kGreen: return "#2ca02c";
    case world::Color::kBlue: return "#1f77b4";
    case world::Color::kYellow: return "#e6c200";
  }
  return "#000";
}

}  // namespace

std::string image_svg(const world::WorldImage& image, bool highlight) {
  constexpr int kCanvas = 200;
  const std::size_t B = image.slots.size();
  const std::size_t cols = B <= 1 ? 1 : (B <= 4 ? 2 : 3);
  const std::size_t rows = (B + cols - 1) / cols;
  const int cell_w = kCanvas / static_cast<int>(cols);
  const int cell_h = kCanvas / static_cast<int>(std::max<std::size_t>(rows, 1));
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kCanvas << ' ' << kCanvas
     << "\" width=\"" << kCanvas << "\" height=\"" << kCanvas << "\">";
  os << "<rect x=\"1\" y=\"1\" width=\"198\" height=\"198\" fill=\"#fafafa\" stroke=\""
     << (highlight ? "#ff7f0e\" stroke-width=\"4\"" : "#999\" stroke-width=\"1\"") << "/>";
  for (std::size_t i = 0; i < B; ++i) {
    const auto& s = image.slots[i];
    if (!s.present) continue;
    const int cx = static_cast<int>(i % cols) * cell_w + cell_w / 2;
    const int cy = static_cast<int>(i / cols) * cell_h + cell_h / 2;
    const int r = s.size == world::Size::kLarge ? 36 : 18;
    const char* f = fill(s.color);
    switch (s.shape) {
      case world::ObjShape::kCircle:
        os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"" << r << "\" fill=\"" << f << "\"/>";
        break;
      case world::ObjShape::kSquare:
        os << "<rect x=\"" << cx - r << "\" y=\"" << cy - r << "\" width=\"" << 2 * r << "\" height=\""
           << 2 * r << "\" fill=\"" << f << "\"/>";
        break;
      case world::ObjShape::kTriangle:
        os << "<polygon points=\"" << cx << ',' << cy - r << ' ' << cx - r << ',' << cy + r << ' '
           << cx + r << ',' << cy + r << "\" fill=\"" << f << "\"/>";
        break;
    }
  }
  os << "</svg>";
  return os.str();
}

std::string describe(const world::WorldImage& image) {
  std::ostringstream os;
  bool first = true;
  for (const auto& s : image.slots) {
    if (!s.present) continue;
    if (!first) os << ", ";
    first = false;
    os << world::to_string(s.size) << ' ' << world::to_string(s.color) << ' ' << world::to_string(s.shape);
  }
  return os.str();
}

}  // namespace dwd::render
