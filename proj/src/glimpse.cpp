#include "dtram/glimpse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dtram {

Location Location::clamped() const {
  return Location{std::clamp(y, -1.0, 1.0), std::clamp(x, -1.0, 1.0)};
}

std::pair<double, double> location_to_pixel(const Location& l, int height, int width) {
  const double row = (l.y + 1.0) / 2.0 * (height - 1);
  const double col = (l.x + 1.0) / 2.0 * (width - 1);
  return {row, col};
}

GlimpsePatch extract_glimpse(const ImageGray& image, const Location& l, int g) {
  if (g < 1) {
    throw std::invalid_argument("extract_glimpse: glimpse size must be >= 1, got " +
                                std::to_string(g));
  }
  const auto [row_c, col_c] = location_to_pixel(l.clamped(), image.height(), image.width());
  const long r0 = std::llround(row_c - g / 2.0);
  const long c0 = std::llround(col_c - g / 2.0);

  GlimpsePatch patch = GlimpsePatch::Zero(g, g);
  for (int i = 0; i < g; ++i) {
    const long r = r0 + i;
    if (r < 0 || r >= image.height()) continue;
    for (int j = 0; j < g; ++j) {
      const long c = c0 + j;
      if (c < 0 || c >= image.width()) continue;
      patch(i, j) = image.pixels(r, c);
    }
  }
  return patch;
}

}  // namespace dtram
